"""CTMC construction, transient analysis and stochastic simulation.

Everything here works on top of ``semantics.enabled_transitions(state)``,
which returns the closed-system labels of a state with their continuation
functions. States are flat tuples of components.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import sparse, stats

from .futs import total_mass
from .terms import TT


class StateOverflow(RuntimeError):
    def __init__(self, reached: int, limit: int):
        self.reached, self.limit = reached, limit
        super().__init__(f"state space exceeds {limit} states ({reached} discovered)")


@dataclass
class Ctmc:
    states: list
    transitions: list  # per state: list of (target index, rate, label)
    initial: int = 0
    index: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.states)

    def exit_rates(self) -> np.ndarray:
        return np.array([math.fsum(r for _, r, _ in row) for row in self.transitions])

    def rate_matrix(self) -> sparse.csr_matrix:
        """Off-diagonal rates, summed across labels; self-loops dropped."""
        rows, cols, vals = [], [], []
        for i, row in enumerate(self.transitions):
            for j, r, _ in row:
                if j != i:
                    rows.append(i)
                    cols.append(j)
                    vals.append(r)
        m = sparse.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return m.tocsr()  # duplicates are summed

    def generator(self) -> sparse.csr_matrix:
        r = self.rate_matrix()
        return (r - sparse.diags(np.asarray(r.sum(axis=1)).ravel())).tocsr()


def build_ctmc(s0, semantics, max_states: int = 100_000) -> Ctmc:
    """Breadth-first closure of ``s0``; states are numbered in discovery order."""
    if max_states < 1:
        raise ValueError("max_states must be at least 1")
    states = [s0]
    index = {s0: 0}
    transitions = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        row = []
        for label, f in semantics.enabled_transitions(states[i]):
            for t, rate in f.items():
                j = index.get(t)
                if j is None:
                    if len(states) >= max_states:
                        raise StateOverflow(len(states) + 1, max_states)
                    j = len(states)
                    index[t] = j
                    states.append(t)
                    queue.append(j)
                row.append((j, rate, label))
        transitions.append(row)
    return Ctmc(states, transitions, 0, index)


def transient(c: Ctmc, t: float, tol: float = 1e-9) -> np.ndarray:
    """State distribution at time ``t`` by uniformization.

    The Poisson series is cut once the remaining tail mass is below ``tol``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if not 0 < tol <= 1e-3:
        raise ValueError("tol must be in (0, 1e-3]")
    p = np.zeros(c.n)
    p[c.initial] = 1.0
    r = c.rate_matrix()
    exits = np.asarray(r.sum(axis=1)).ravel()
    qmax = float(exits.max()) if c.n else 0.0
    if t == 0 or qmax == 0:
        return p
    q = 1.05 * qmax
    # P = I + Q/q, applied to row vectors
    pt = (r / q + sparse.diags(1.0 - exits / q)).T.tocsr()
    lam = q * t
    right = int(stats.poisson.ppf(1.0 - tol / 2, lam)) + 1
    while stats.poisson.sf(right, lam) > tol / 2:
        right += 1
    weights = stats.poisson.pmf(np.arange(right + 1), lam)
    out = weights[0] * p
    v = p
    for k in range(1, right + 1):
        v = pt @ v
        if weights[k] > 0:
            out += weights[k] * v
    return out


# ---------------------------------------------------------------------------
# measures

@dataclass(frozen=True)
class Measure:
    """A numeric observation of a state.

    ``kind`` is one of ``count`` (components satisfying ``predicate``),
    ``sum``/``mean``/``std`` (of ``attribute`` over those components; ``std``
    is the population standard deviation), ``value`` (``attribute`` of
    component ``component``) or ``custom`` (``fn(state, semantics)``).
    """
    name: str
    kind: str
    attribute: str | None = None
    predicate: Any = TT()
    component: int | None = None
    fn: Callable | None = field(default=None, compare=False)

    def __call__(self, state, semantics) -> float:
        if self.kind == "custom":
            return float(self.fn(state, semantics))
        if self.kind == "value":
            e = semantics.evaluation(state[self.component])
            return float(e.get(self.attribute, math.nan))
        evals = [semantics.evaluation(c) for c in state]
        chosen = [e for e in evals if semantics.sat(e, self.predicate)]
        if self.kind == "count":
            return float(len(chosen))
        values = [float(e[self.attribute]) for e in chosen if self.attribute in e]
        if self.kind == "sum":
            return math.fsum(values)
        if not values:
            return math.nan
        if self.kind == "mean":
            return math.fsum(values) / len(values)
        if self.kind == "std":
            mu = math.fsum(values) / len(values)
            return math.sqrt(math.fsum((v - mu) ** 2 for v in values) / len(values))
        raise ValueError(f"unknown measure kind {self.kind!r}")


MEASURE_KINDS = ("count", "sum", "mean", "std", "value")


def parse_measure(text: str) -> Measure:
    """``name=count(pred)``, ``name=sum(attr; pred)``, ``name=mean(attr)``,
    ``name=std(attr; pred)`` or ``name=value(attr, index)``."""
    from .syntax import parse_predicate

    name, sep, body = text.partition("=")
    name = name.strip()
    body = body.strip()
    if not sep or not name or "(" not in body or not body.endswith(")"):
        raise ValueError(f"bad measure {text!r}; expected NAME=KIND(ARGS)")
    kind, _, args = body[:-1].partition("(")
    kind = kind.strip()
    if kind not in MEASURE_KINDS:
        raise ValueError(f"bad measure kind {kind!r}; expected one of {', '.join(MEASURE_KINDS)}")
    if kind == "count":
        return Measure(name, kind, predicate=parse_predicate(args) if args.strip() else TT())
    if kind == "value":
        attr, _, idx = args.partition(",")
        return Measure(name, kind, attribute=attr.strip(), component=int(idx))
    attr, _, pred = args.partition(";")
    return Measure(name, kind, attribute=attr.strip(),
                   predicate=parse_predicate(pred) if pred.strip() else TT())


# ---------------------------------------------------------------------------
# simulation

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for one replication."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass
class Trace:
    seed: int
    t_end: float
    grid: np.ndarray
    samples: np.ndarray  # len(grid) x len(measures)
    jumps: list  # (time, state index into ``states``)
    states: list
    grid_states: list
    deadlocked: bool = False
    deadlock_time: float | None = None
    n_jumps: int = 0
    final_state: Any = None


class _Outgoing:
    """Flattened outgoing transitions of a state: targets, labels, cumulative rates.

    Generic route over ``enabled_transitions``; cached per state.
    """

    def __init__(self, semantics, limit=50_000):
        self.semantics = semantics
        self.cache: dict = {}
        self.limit = limit

    def table(self, state):
        r = self.cache.get(state)
        if r is None:
            targets, labels, rates = [], [], []
            for label, f in self.semantics.enabled_transitions(state):
                for t, v in f.items():
                    targets.append(t)
                    labels.append(label)
                    rates.append(v)
            cum = np.cumsum(rates) if rates else None
            r = (targets, labels, cum)
            if len(self.cache) >= self.limit:
                self.cache.clear()
            self.cache[state] = r
        return r

    def exit_rate(self, state) -> float:
        cum = self.table(state)[2]
        return 0.0 if cum is None else float(cum[-1])

    def sample(self, state, rng, exit_rate):
        targets, labels, cum = self.table(state)
        k = int(np.searchsorted(cum, rng.random() * exit_rate, side="right"))
        k = min(k, len(targets) - 1)
        return targets[k], labels[k]


class _Factored:
    """Outgoing transitions in the factored form of ``semantics.moves``.

    A move with parts ``f_1..f_k`` has mass ``prod |f_j|``; the successor is
    drawn by choosing a move proportionally to its mass and then each part's
    component proportionally to ``f_j``. This is the same distribution as
    choosing a target of the merged continuation, without building every
    successor system.
    """

    def __init__(self, semantics, limit=50_000):
        self.semantics = semantics
        self.cache: dict = {}
        self.limit = limit

    def table(self, state):
        r = self.cache.get(state)
        if r is None:
            moves, masses = [], []
            for label, parts in self.semantics.moves(state):
                active = []
                mass = 1.0
                for i, f in parts:
                    if len(f) == 1 and f(state[i]) == 1.0:
                        continue
                    m = total_mass(f)
                    if m <= 0:
                        mass = 0.0
                        break
                    mass *= m
                    active.append((i, f, m))
                if mass > 0:
                    moves.append((label, active))
                    masses.append(mass)
            cum = np.cumsum(masses) if masses else None
            r = (moves, cum)
            if len(self.cache) >= self.limit:
                self.cache.clear()
            self.cache[state] = r
        return r

    def exit_rate(self, state) -> float:
        cum = self.table(state)[1]
        return 0.0 if cum is None else float(cum[-1])

    def sample(self, state, rng, exit_rate):
        moves, cum = self.table(state)
        k = int(np.searchsorted(cum, rng.random() * exit_rate, side="right"))
        label, active = moves[min(k, len(moves) - 1)]
        if not active:
            return state, label
        new = list(state)
        for i, f, m in active:
            u = rng.random() * m
            acc = 0.0
            chosen = None
            for c, v in f.items():
                chosen = c
                acc += v
                if u < acc:
                    break
            new[i] = chosen
        return tuple(new), label


def outgoing(semantics, factored: bool = True):
    if factored and hasattr(semantics, "moves"):
        return _Factored(semantics)
    return _Outgoing(semantics)


def simulate(s0, semantics, t_end: float, seed: int, measures=(), grid=None,
             on_jump: Callable | None = None, record: bool = True,
             keep_grid_states: bool = False, transitions=None) -> Trace:
    """One SSA run up to ``t_end``.

    Measures are sampled at the points of ``grid`` (default: ``0`` and
    ``t_end``) from the state holding at that instant. ``on_jump(t, old, new,
    label)`` is called after every jump.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    grid = np.asarray([0.0, t_end] if grid is None else grid, dtype=float)
    if np.any(np.diff(grid) < 0) or (len(grid) and (grid[0] < 0 or grid[-1] > t_end)):
        raise ValueError("grid must be sorted within [0, t_end]")
    rng = make_rng(seed)
    out = transitions or outgoing(semantics)
    samples = np.full((len(grid), len(measures)), np.nan)
    grid_states = []
    states, jumps, sidx = [], [], {}

    def note(t, s):
        if record:
            k = sidx.get(s)
            if k is None:
                k = sidx[s] = len(states)
                states.append(s)
            jumps.append((t, k))

    def observe(upto, s, g):
        # grid points strictly before ``upto`` see state ``s``
        row = None
        if measures and g < len(grid) and grid[g] < upto:
            row = [m(s, semantics) for m in measures]
        while g < len(grid) and grid[g] < upto:
            if row is not None:
                samples[g] = row
            if keep_grid_states:
                grid_states.append(s)
            g += 1
        return g

    t, s, g, n = 0.0, s0, 0, 0
    note(t, s)
    deadlock_time = None
    while True:
        exit_rate = out.exit_rate(s)
        if exit_rate <= 0:
            deadlock_time = t
            g = observe(math.inf, s, g)
            break
        t_next = t + rng.exponential(1.0 / exit_rate)
        if t_next > t_end:
            g = observe(math.inf, s, g)
            break
        g = observe(t_next, s, g)
        new, label = out.sample(s, rng, exit_rate)
        if on_jump is not None:
            on_jump(t_next, s, new, label)
        t, s = t_next, new
        n += 1
        note(t, s)
    return Trace(seed, t_end, grid, samples, jumps, states, grid_states,
                 deadlock_time is not None, deadlock_time, n, s)


# ---------------------------------------------------------------------------
# replications

@dataclass
class Summary:
    grid: np.ndarray
    names: list
    per_rep: np.ndarray  # n_reps x len(grid) x len(names)
    deadlock_times: list
    base_seed: int
    n_jumps: list
    events: list = field(default_factory=list)  # per replication, jumps selected by ``count``

    @property
    def n_reps(self) -> int:
        return self.per_rep.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.per_rep.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        if self.n_reps == 1:
            return np.zeros_like(self.per_rep[0])
        return self.per_rep.std(axis=0, ddof=1)

    @property
    def ci(self) -> np.ndarray:
        """Half-width of the 95% Student-t confidence interval of the mean."""
        n = self.n_reps
        if n == 1:
            return np.zeros_like(self.per_rep[0])
        return stats.t.ppf(0.975, n - 1) * self.std / math.sqrt(n)

    def deadlocked_by(self) -> np.ndarray:
        d = np.array([math.inf if x is None else x for x in self.deadlock_times])
        return np.array([int(np.sum(d <= g)) for g in self.grid])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["time"]
        for name in self.names:
            header += [f"{name}_mean", f"{name}_std", f"{name}_ci95"]
        header.append("deadlocked")
        w.writerow(header)
        mean, std, ci, dead = self.mean, self.std, self.ci, self.deadlocked_by()
        for g, t in enumerate(self.grid):
            row = [repr(float(t))]
            for m in range(len(self.names)):
                row += [repr(float(mean[g, m])), repr(float(std[g, m])), repr(float(ci[g, m]))]
            row.append(str(dead[g]))
            w.writerow(row)
        return buf.getvalue()

    def traces_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "seed", "time"] + list(self.names))
        for r in range(self.n_reps):
            for g, t in enumerate(self.grid):
                w.writerow([r, self.base_seed + r, repr(float(t))]
                           + [repr(float(x)) for x in self.per_rep[r, g]])
        return buf.getvalue()


_WORKER: dict = {}


def _init_worker(ctx):
    _WORKER.clear()
    _WORKER.update(ctx)
    _WORKER["transitions"] = outgoing(ctx["semantics"])


class _LabelCounter:
    def __init__(self, select):
        self.select = select
        self.count = 0

    def __call__(self, t, old, new, label):
        if self.select(label):
            self.count += 1


def _run_replication(r: int):
    ctx = _WORKER
    counter = _LabelCounter(ctx["count"]) if ctx["count"] is not None else None
    tr = simulate(ctx["s0"], ctx["semantics"], ctx["t_end"], ctx["base_seed"] + r,
                  ctx["measures"], ctx["grid"], on_jump=counter, record=False,
                  transitions=ctx["transitions"])
    return tr.samples, tr.deadlock_time, tr.n_jumps, (counter.count if counter else 0)


def replicate(s0, semantics, t_end: float, base_seed: int, n_reps: int, measures=(),
              grid=None, parallelism: int = 1, count: Callable | None = None) -> Summary:
    """Independent SSA runs; replication ``r`` uses seed ``base_seed + r``.

    Results are collected in replication order, so the summary does not depend
    on ``parallelism``. ``count(label)`` selects jumps to be counted per
    replication (it must be picklable when ``parallelism > 1``).
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    grid = np.asarray([0.0, t_end] if grid is None else grid, dtype=float)
    ctx = {"s0": s0, "semantics": semantics, "t_end": t_end, "base_seed": base_seed,
           "measures": tuple(measures), "grid": grid, "count": count}
    workers = max(1, min(parallelism, n_reps))
    if workers == 1:
        _init_worker(ctx)
        results = [_run_replication(r) for r in range(n_reps)]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(ctx,)) as pool:
            results = list(pool.map(_run_replication, range(n_reps),
                                    chunksize=max(1, n_reps // (4 * workers))))
    per_rep = np.stack([r[0] for r in results])
    return Summary(grid, [m.name for m in measures], per_rep, [r[1] for r in results],
                   base_seed, [r[2] for r in results], [r[3] for r in results])


def default_parallelism() -> int:
    return os.cpu_count() or 1
