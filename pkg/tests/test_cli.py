import csv
import json
import time

import pytest

from stocs.cli import main

import models


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text if isinstance(text, str) else json.dumps(text))
        return str(p)
    return write


def run(*argv):
    return main([str(a) for a in argv])


def test_check_ok(files, capsys):
    assert run("check", files("m.stocs", models.TWO_PUT)) == 0
    assert "ok (2 components" in capsys.readouterr().out


def test_check_parse_error(files, capsys):
    assert run("check", files("m.stocs", "component a { process nil }")) == 2
    err = capsys.readouterr().err
    assert "m.stocs:1:27: error" in err


def test_check_semantic_error(files):
    assert run("check", files("m.stocs", "proc A = A;\ncomponent a { process A; }")) == 3


def test_check_bad_config(files):
    m = files("m.stocs", models.TWO_PUT)
    assert run("check", m, "--rates", files("r.json", {"default_rate": -1})) == 4
    assert run("check", m, "--rates", files("r2.json", "{nope")) == 4
    assert run("check", m, "--rates", "/nonexistent.json") == 4


def test_rates_clause_relative_to_model(files):
    files("r.json", {"default_rate": -3})
    m = files("m.stocs", models.TWO_STATE + 'rates "r.json";\n')
    assert run("check", m) == 4
    # a command-line config overrides the clause
    assert run("check", m, "--config", files("ok.json", {})) == 0


def test_states_csv_and_manifest(files, tmp_path):
    out = tmp_path / "o"
    assert run("states", files("m.stocs", models.TWO_STATE), "--out-dir", out) == 0
    rows = list(csv.reader(open(out / "states.csv")))
    assert rows[0] == ["index", "exit_rate", "state"] and len(rows) == 3
    man = json.loads((out / "states.manifest.json").read_text())
    assert man["states"] == 2 and man["semantics"] == "act-or"
    assert len(man["model_sha256"]) == 64


def test_states_netor_differs(files, tmp_path, capsys):
    m = files("m.stocs", models.TWO_PUT)
    r = files("r.json", models.LOSSY)
    run("states", m, "--rates", r, "--out-dir", tmp_path / "a")
    run("states", m, "--rates", r, "--semantics", "net-or", "--out-dir", tmp_path / "n")
    out = capsys.readouterr().out
    assert "3 states" in out and "4 states" in out and "net-or(put)+act-or(gq)" in out


def test_states_overflow(files, tmp_path):
    assert run("states", files("m.stocs", models.TWO_STATE), "--max-states", 1,
               "--out-dir", tmp_path) == 5


def test_transient(files, tmp_path):
    m = files("m.stocs", models.TWO_STATE)
    assert run("transient", m, "--t", 0, "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "transient.csv")))
    assert [float(r["probability"]) for r in rows] == [1.0, 0.0]
    assert run("transient", m, "--t", 1.0, "--tol", 1e-10, "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "transient.csv")))
    p = [float(r["probability"]) for r in rows]
    assert p[1] == pytest.approx(0.6321205588, abs=1e-9)
    assert sum(p) == pytest.approx(1.0, abs=1e-10)
    assert run("transient", m, "--t", 1.0, "--tol", 0.5, "--out-dir", tmp_path) == 1
    assert run("transient", m, "--t", -1.0, "--out-dir", tmp_path) == 1


def test_simulate_deterministic(files, tmp_path):
    m = files("m.stocs", models.CYCLE)
    args = ["simulate", m, "--t-end", 5, "--replications", 6, "--seed", 3,
            "--measure", "n=sum(n)", "--traces"]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--out-dir", tmp_path / "b", "--parallel", 2) == 0
    for name in ("summary.csv", "traces.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "summary.manifest.json").read_text())
    assert man["seed"] == 3 and man["replication_seeds"] == "3..8"


def test_seed_from_environment(files, tmp_path, monkeypatch):
    m = files("m.stocs", models.CYCLE)
    monkeypatch.setenv("STOCS_SEED", "17")
    assert run("simulate", m, "--t-end", 1, "--out-dir", tmp_path) == 0
    assert json.loads((tmp_path / "summary.manifest.json").read_text())["seed"] == 17
    monkeypatch.setenv("STOCS_SEED", "x")
    assert run("simulate", m, "--t-end", 1, "--out-dir", tmp_path) == 1


def test_simulate_deadlock_reported(files, tmp_path):
    m = files("m.stocs", models.TWO_STATE)
    assert run("simulate", m, "--t-end", 50, "--replications", 3, "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert rows[-1]["deadlocked"] == "3"


def test_simulate_bad_measure(files, tmp_path):
    m = files("m.stocs", models.CYCLE)
    assert run("simulate", m, "--t-end", 1, "--measure", "bad", "--out-dir", tmp_path) == 1
    assert run("simulate", m, "--t-end", 0, "--out-dir", tmp_path) == 1


def test_any_model_runs_under_both_semantics(files, tmp_path):
    m = files("m.stocs", models.FLIP)
    for sem in ("act-or", "net-or"):
        assert run("simulate", m, "--t-end", 3, "--semantics", sem, "--out-dir", tmp_path) == 0


def test_bikeshare_emit_only(tmp_path):
    assert run("bikeshare", "--emit-only", "--out-dir", tmp_path) == 0
    assert run("check", tmp_path / "bikeshare.stocs", "--rates", tmp_path / "rates-resource.json") == 0


def test_bikeshare_bad_config(tmp_path):
    assert run("bikeshare", "--grid", "2x2", "--users", -1, "--out-dir", tmp_path) == 4
    assert run("bikeshare", "--grid", "two", "--out-dir", tmp_path) == 1


def test_bikeshare_desk_scale(tmp_path):
    t0 = time.time()
    assert run("bikeshare", "--grid", "2x2", "--users", 10, "--t-end", 10, "--replications", 4,
               "--grid-points", 11, "--out-dir", tmp_path) == 0
    assert time.time() - t0 < 60
    a = (tmp_path / "summary-resource.csv").read_text().splitlines()[0]
    b = (tmp_path / "summary-constant.csv").read_text().splitlines()[0]
    assert a == b


def test_plot(tmp_path):
    pytest.importorskip("matplotlib")
    run("bikeshare", "--grid", "2x2", "--users", 4, "--t-end", 2, "--replications", 2,
        "--grid-points", 5, "--out-dir", tmp_path)
    out = tmp_path / "fig.png"
    assert run("plot", tmp_path / "summary-resource.csv", tmp_path / "summary-constant.csv",
               "--out", out) == 0
    assert out.stat().st_size > 0
