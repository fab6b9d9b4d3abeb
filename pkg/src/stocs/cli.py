"""Command-line interface: ``stocs check|states|simulate|transient|bikeshare|plot``.

Exit codes: 0 success, 2 parse error, 3 semantic error, 4 rate/error
configuration error, 5 state-space overflow, 1 other failures (for example
I/O).
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_SEMANTIC, EXIT_CONFIG, EXIT_OVERFLOW = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _sha256(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("STOCS_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(EXIT_FAIL, f"STOCS_SEED must be an integer, got {env!r}") from None
    return 0


# ---------------------------------------------------------------------------
# loading

class Loaded:
    def __init__(self, path, text, model, system, defs, rates, rates_path):
        self.path, self.text, self.model = path, text, model
        self.system, self.defs, self.rates, self.rates_path = system, defs, rates, rates_path

    def semantics(self, name):
        from .netor import make_semantics
        return make_semantics(name, self.defs, self.rates)

    def manifest(self, **extra) -> dict:
        d = {
            "tool": "stocs",
            "version": __version__,
            "model": str(self.path),
            "model_sha256": _sha256(self.text),
            "rates": str(self.rates_path) if self.rates_path else None,
            "rates_sha256": self.rates.digest(),
        }
        d.update(extra)
        return d


def load(model_path: str, rates_path: str | None) -> Loaded:
    from .rates import RateConfig, RateConfigError
    from .syntax import ParseError, build, check_model, parse_model

    path = Path(model_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_FAIL, f"{path}: {exc.strerror}") from None
    try:
        m = parse_model(text, strict=False)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"{path}:{exc.line}:{exc.col}: error: {exc.message}") from None
    diags = check_model(m)
    if diags:
        raise CliError(EXIT_SEMANTIC, "\n".join(d.format(str(path)) for d in diags))
    if rates_path is None and m.rates:
        rates_path = str(path.parent / m.rates)
    try:
        rates = RateConfig.load(rates_path) if rates_path else RateConfig()
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"{rates_path}: {exc.strerror}") from None
    except RateConfigError as exc:
        raise CliError(EXIT_CONFIG, f"{rates_path}: error: {exc}") from None
    system, defs = build(m)
    return Loaded(path, text, m, system, defs, rates, rates_path)


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(path: Path, manifest: dict):
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _runtime_errors():
    from .actor import UnguardedRecursion
    from .rates import RateConfigError
    return UnguardedRecursion, RateConfigError


def _guard(fn):
    """Map errors raised while exploring a model onto the exit-code taxonomy."""
    UnguardedRecursion, RateConfigError = _runtime_errors()
    try:
        return fn()
    except RateConfigError as exc:
        raise CliError(EXIT_CONFIG, f"error: {exc}") from None
    except (UnguardedRecursion, TypeError, ValueError) as exc:
        raise CliError(EXIT_SEMANTIC, f"error: {exc}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_check(args) -> int:
    loaded = load(args.model, args.rates)
    n = len(loaded.system)
    print(f"{args.model}: ok ({n} component{'s' if n != 1 else ''}, "
          f"{len(loaded.defs)} process definition{'s' if len(loaded.defs) != 1 else ''})")
    return EXIT_OK


def cmd_states(args) -> int:
    from .ctmc import StateOverflow, build_ctmc
    from .syntax import format_state

    loaded = load(args.model, args.rates)
    sem = loaded.semantics(args.semantics)
    started = _now()
    try:
        c = _guard(lambda: build_ctmc(loaded.system, sem, args.max_states))
    except StateOverflow as exc:
        raise CliError(EXIT_OVERFLOW, f"error: {exc}") from None
    out = _out_dir(args)
    exits = c.exit_rates()
    with open(out / "states.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "exit_rate", "state"])
        for i, s in enumerate(c.states):
            w.writerow([i, repr(float(exits[i])), format_state(s)])
    with open(out / "transitions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "rate", "label"])
        for i, row in enumerate(c.transitions):
            for j, r, label in row:
                w.writerow([i, j, repr(float(r)), type(label).__name__])
    n_tr = sum(len(r) for r in c.transitions)
    _write_manifest(out / "states.manifest.json", loaded.manifest(
        command="states", semantics=sem.label, max_states=args.max_states, started=started,
        finished=_now(), states=c.n, transitions=n_tr, outputs=["states.csv", "transitions.csv"]))
    print(f"{c.n} states, {n_tr} transitions ({sem.label})")
    return EXIT_OK


def _grid(args, t_end) -> np.ndarray:
    if args.grid < 2:
        raise CliError(EXIT_FAIL, "--grid needs at least 2 points")
    return np.linspace(0.0, t_end, args.grid)


def cmd_simulate(args) -> int:
    from .ctmc import parse_measure, replicate
    from .syntax import ParseError

    if not args.t_end > 0:
        raise CliError(EXIT_FAIL, "--t-end must be positive")
    if args.replications < 1:
        raise CliError(EXIT_FAIL, "--replications must be at least 1")
    loaded = load(args.model, args.rates)
    sem = loaded.semantics(args.semantics)
    try:
        measures = [parse_measure(m) for m in args.measure]
    except (ValueError, ParseError) as exc:
        raise CliError(EXIT_FAIL, f"error: {exc}") from None
    seed = _seed(args)
    grid = _grid(args, args.t_end)
    started = _now()
    summary = _guard(lambda: replicate(loaded.system, sem, args.t_end, seed, args.replications,
                                       measures, grid, args.parallel))
    out = _out_dir(args)
    (out / "summary.csv").write_text(summary.to_csv())
    outputs = ["summary.csv"]
    if args.traces:
        (out / "traces.csv").write_text(summary.traces_csv())
        outputs.append("traces.csv")
    deadlocks = sum(d is not None for d in summary.deadlock_times)
    _write_manifest(out / "summary.manifest.json", loaded.manifest(
        command="simulate", semantics=sem.label, seed=seed, replications=args.replications,
        replication_seeds=f"{seed}..{seed + args.replications - 1}", t_end=args.t_end,
        grid_points=args.grid, measures=list(args.measure), parallel=args.parallel,
        started=started, finished=_now(), deadlocked_replications=deadlocks, outputs=outputs))
    print(f"{args.replications} replication(s), seed {seed}, "
          f"{sum(summary.n_jumps)} jumps, {deadlocks} deadlocked")
    for k, name in enumerate(summary.names):
        print(f"  {name} at t={args.t_end:g}: mean {summary.mean[-1, k]:.6g} "
              f"± {summary.ci[-1, k]:.3g}")
    return EXIT_OK


def cmd_transient(args) -> int:
    from .ctmc import StateOverflow, build_ctmc, transient
    from .syntax import format_state

    if args.t < 0:
        raise CliError(EXIT_FAIL, "--t must be non-negative")
    if not 0 < args.tol <= 1e-3:
        raise CliError(EXIT_FAIL, "--tol must be in (0, 1e-3]")
    loaded = load(args.model, args.rates)
    sem = loaded.semantics(args.semantics)
    started = _now()
    try:
        c = _guard(lambda: build_ctmc(loaded.system, sem, args.max_states))
    except StateOverflow as exc:
        raise CliError(EXIT_OVERFLOW, f"error: {exc}") from None
    p = transient(c, args.t, args.tol)
    out = _out_dir(args)
    with open(out / "transient.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "state", "probability"])
        for i, s in enumerate(c.states):
            w.writerow([i, format_state(s), repr(float(p[i]))])
    _write_manifest(out / "transient.manifest.json", loaded.manifest(
        command="transient", semantics=sem.label, t=args.t, tol=args.tol, states=c.n,
        started=started, finished=_now(), outputs=["transient.csv"]))
    print(f"{c.n} states; probability mass {float(p.sum()):.12g} at t={args.t:g}")
    return EXIT_OK


def _parse_grid_dims(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise CliError(EXIT_FAIL, f"--grid expects ROWSxCOLS, got {text!r}") from None
    return rows, cols


def cmd_bikeshare(args) -> int:
    from .bikeshare import BikeShareConfig, generate, run_scenario, time_average

    rows, cols = _parse_grid_dims(args.grid)
    modes = ["resource", "constant"] if args.mode == "both" else [args.mode]
    seed = _seed(args)
    out = _out_dir(args)
    results = {}
    for mode in modes:
        cfg = BikeShareConfig(rows=rows, cols=cols, users=args.users, bikes=args.bikes,
                              slots=args.slots, regime=mode)
        try:
            bm = generate(cfg)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, f"error: {exc}") from None
        (out / "bikeshare.stocs").write_text(bm.text)
        rates_file = out / f"rates-{mode}.json"
        rates_file.write_text(json.dumps(bm.rates_json, indent=2) + "\n")
        if args.emit_only:
            print(f"wrote {out / 'bikeshare.stocs'} and {rates_file}")
            continue
        started = _now()
        bm, summary = run_scenario(cfg, args.t_end, args.replications, seed,
                                   args.grid_points, args.parallel, args.semantics)
        (out / f"summary-{mode}.csv").write_text(summary.to_csv())
        std_avg = time_average(summary, "bikes_std")
        mean_avg = time_average(summary, "bikes_mean")
        results[mode] = (std_avg, mean_avg, summary.events)
        _write_manifest(out / f"summary-{mode}.manifest.json", {
            "tool": "stocs", "version": __version__, "command": "bikeshare",
            "model": "bikeshare.stocs", "model_sha256": _sha256(bm.text),
            "rates": rates_file.name, "rates_sha256": bm.rates.digest(),
            "semantics": args.semantics, "seed": seed, "replications": args.replications,
            "t_end": args.t_end, "grid_points": args.grid_points, "grid": args.grid,
            "users": args.users, "bikes": args.bikes, "slots": args.slots, "mode": mode,
            "parallel": args.parallel, "started": started, "finished": _now(),
            "reservations": summary.events, "outputs": [f"summary-{mode}.csv"],
        })
        print(f"{mode}: time-averaged stddev of available bikes {std_avg.mean():.4f}, "
              f"mean available bikes {mean_avg.mean():.4f}, "
              f"reservations per run {min(summary.events)}..{max(summary.events)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plot import plot_comparison
    try:
        plot_comparison(args.left, args.right, args.out, args.left_title, args.right_title)
    except ImportError:
        raise CliError(EXIT_FAIL, "plotting needs matplotlib (pip install matplotlib)") from None
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stocs", description="Stochastic ensemble models: "
                                "checking, state spaces, transient analysis and simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("model", help="model file (.stocs)")
        sp.add_argument("--rates", "--config", dest="rates", default=None,
                        help="rate/error configuration (JSON); overrides the model's rates clause")

    def sem_arg(sp):
        sp.add_argument("--semantics", choices=["act-or", "net-or"], default="act-or")

    def out_arg(sp, default):
        sp.add_argument("--out-dir", default=default, help=f"output directory (default {default})")

    sp = sub.add_parser("check", help="parse and check a model and its configuration")
    model_args(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("states", help="enumerate the reachable state space")
    model_args(sp)
    sem_arg(sp)
    sp.add_argument("--max-states", type=int, default=100_000)
    out_arg(sp, "stocs-out")
    sp.set_defaults(func=cmd_states)

    sp = sub.add_parser("simulate", help="stochastic simulation with replications")
    model_args(sp)
    sem_arg(sp)
    sp.add_argument("--t-end", type=float, required=True)
    sp.add_argument("--seed", type=int, default=None, help="base seed (default $STOCS_SEED or 0)")
    sp.add_argument("--replications", type=int, default=1)
    sp.add_argument("--measure", action="append", default=[],
                    help='NAME=count(PRED) | NAME=sum|mean|std(ATTR[; PRED]) | NAME=value(ATTR, INDEX)')
    sp.add_argument("--grid", type=int, default=11, help="number of evenly spaced observation times")
    sp.add_argument("--parallel", type=int, default=1, help="worker processes")
    sp.add_argument("--traces", action="store_true", help="also write per-replication samples")
    out_arg(sp, "stocs-out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("transient", help="exact transient distribution by uniformization")
    model_args(sp)
    sem_arg(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--max-states", type=int, default=100_000)
    out_arg(sp, "stocs-out")
    sp.set_defaults(func=cmd_transient)

    sp = sub.add_parser("bikeshare", help="bike-sharing scenario: resource vs constant reservation rates")
    sp.add_argument("--grid", default="4x4", help="ROWSxCOLS (default 4x4)")
    sp.add_argument("--users", type=int, default=40)
    sp.add_argument("--bikes", type=int, default=5, help="initial bikes per station")
    sp.add_argument("--slots", type=int, default=5, help="initial free slots per station")
    sp.add_argument("--mode", choices=["resource", "constant", "both"], default="both")
    sp.add_argument("--t-end", type=float, default=30.0)
    sp.add_argument("--replications", type=int, default=20)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--grid-points", type=int, default=101)
    sp.add_argument("--parallel", type=int, default=1)
    sem_arg(sp)
    sp.add_argument("--emit-only", action="store_true", help="only write the model and rate files")
    out_arg(sp, "bikeshare-out")
    sp.set_defaults(func=cmd_bikeshare)

    sp = sub.add_parser("plot", help="two-panel comparison of two bikeshare summaries")
    sp.add_argument("left")
    sp.add_argument("right")
    sp.add_argument("--out", default="bikeshare.png")
    sp.add_argument("--left-title", default="resource-dependent rates")
    sp.add_argument("--right-title", default="constant rates")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
