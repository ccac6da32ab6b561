import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from dpestim.cli import main
from dpestim.core import write_matrix_csv, write_regression_csv
from dpestim.sim import gen_mean_data, gen_regression_data

ROOT = Path(__file__).resolve().parents[1]
SPECS = ROOT / "specs"


@pytest.fixture
def files(tmp_path):
    x, _ = gen_mean_data(300, 8, 3, seed=1)
    data, _ = gen_regression_data(300, 8, 3, seed=2)
    write_matrix_csv(tmp_path / "m.csv", x)
    write_regression_csv(tmp_path / "r.csv", data)
    return tmp_path


def _ledger_sum(meta):
    eps = sum(Fraction(e["epsilon_exact"]) for e in meta["ledger"]["entries"])
    delta = sum(Fraction(e["delta_exact"]) for e in meta["ledger"]["entries"])
    return eps, delta


@pytest.mark.parametrize(
    "kind,extra",
    [
        ("mean", ["--r", "3.0"]),
        ("mean", []),
        ("sparse-mean", ["--s", "3", "--r", "12"]),
        ("sparse-mean", ["--s", "3"]),
        ("regression", []),
        ("regression", ["--t", "5", "--eta0", "2", "--c", "2", "--b", "3", "--r", "2"]),
        ("sparse-regression", ["--s", "4", "--t", "7"]),
    ],
)
def test_estimate_writes_estimate_and_exact_ledger(files, kind, extra):
    src = files / ("r.csv" if "regression" in kind else "m.csv")
    out = files / "est.csv"
    code = main(["estimate", kind, "--in", str(src), "--eps", "0.5", "--delta", "1e-5", "--seed", "7", "--out", str(out), *extra])
    assert code == 0
    est = np.loadtxt(out, delimiter=",")
    assert est.shape == (8,)
    meta = json.loads(Path(f"{out}.json").read_text())
    assert meta["sums_to_requested"] is True
    # independent re-summation of the ledger entries
    assert _ledger_sum(meta) == (Fraction(0.5), Fraction(1e-5))
    assert meta["seed"] == 7


def test_estimate_is_byte_reproducible(files):
    outs = []
    for i in range(2):
        out = files / f"o{i}.csv"
        args = ["estimate", "sparse-regression", "--in", str(files / "r.csv"), "--eps", "0.5",
                "--delta", "1e-5", "--s", "3", "--seed", "11", "--out", str(out)]
        assert main(args) == 0
        outs.append((out.read_bytes(), Path(f"{out}.json").read_bytes()))
    assert outs[0] == outs[1]


def test_estimate_stdout_round_trips(files, capsys):
    assert main(["estimate", "mean", "--in", str(files / "m.csv"), "--eps", "0.5", "--delta", "1e-5", "--r", "3", "--seed", "1"]) == 0
    text = capsys.readouterr().out
    vals = [float(v) for v in text.strip().split(",")]
    assert ",".join(repr(v) for v in vals) == text.strip()


def test_seed_environment_variable(files, monkeypatch, capsys):
    base = ["estimate", "mean", "--in", str(files / "m.csv"), "--eps", "0.5", "--delta", "1e-5", "--r", "3"]
    main(base + ["--seed", "5"])
    explicit = capsys.readouterr().out
    monkeypatch.setenv("DP_ESTIM_SEED", "5")
    main(base)
    assert capsys.readouterr().out == explicit
    main(base + ["--seed", "6"])
    assert capsys.readouterr().out != explicit
    monkeypatch.setenv("DP_ESTIM_SEED", "abc")
    assert main(base) == 2


def test_estimate_sparsity_larger_than_dimension(files, capsys):
    code = main(["estimate", "sparse-regression", "--in", str(files / "r.csv"), "--s", "20", "--t", "30",
                 "--eps", "0.5", "--delta", "1e-5"])
    assert code == 2
    assert "s <= d" in capsys.readouterr().err


@pytest.mark.parametrize(
    "args",
    [
        ["estimate", "mean", "--eps", "0.5", "--delta", "1e-5"],
        ["estimate", "median", "--in", "x", "--eps", "1", "--delta", "0"],
        ["estimate", "mean", "--in", "{m}", "--eps", "-1", "--delta", "1e-5"],
        ["estimate", "mean", "--in", "{m}", "--eps", "1", "--delta", "1.5"],
        ["estimate", "mean", "--in", "{m}", "--eps", "abc", "--delta", "0.1"],
        ["estimate", "sparse-mean", "--in", "{m}", "--eps", "1", "--delta", "0.1"],
        ["estimate", "mean", "--in", "{m}", "--eps", "1", "--delta", "0.1", "--r", "-2"],
        ["estimate", "mean", "--in", "{m}", "--eps", "1", "--delta", "0"],
        ["bogus"],
        [],
    ],
)
def test_usage_errors_exit_2(files, args):
    args = [a.replace("{m}", str(files / "m.csv")) for a in args]
    assert main(args) == 2


def test_data_errors_exit_1(files):
    assert main(["estimate", "mean", "--in", str(files / "missing.csv"), "--eps", "1", "--delta", "0.1"]) == 1
    bad = files / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    assert main(["estimate", "mean", "--in", str(bad), "--eps", "1", "--delta", "0.1"]) == 1
    bad.write_text("1,2\n3\n")
    assert main(["estimate", "mean", "--in", str(bad), "--eps", "1", "--delta", "0.1"]) == 1


def test_experiment_golden_csv(tmp_path, capsys):
    assert main(["experiment", str(SPECS / "mean_rate.json"), "--out-dir", str(tmp_path), "--jobs", "4"]) == 0
    got = (tmp_path / "mean_rate.csv").read_text()
    assert got == (ROOT / "tests" / "golden" / "mean_rate.csv").read_text()
    summary = json.loads((tmp_path / "mean_rate.summary.json").read_text())
    assert len(summary["aggregates"]) == 3
    assert "log-log slope" in capsys.readouterr().out


def test_experiment_dry_run_and_validation(tmp_path, capsys):
    assert main(["experiment", str(SPECS / "mean_rate.json"), "--dry-run", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "n=5000 d=20" in out and "cells=150" in out
    assert not list(tmp_path.iterdir())

    spec = json.loads((SPECS / "mean_rate.json").read_text())
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(spec, reps=0)))
    assert main(["experiment", str(bad)]) == 2
    assert "reps" in capsys.readouterr().err
    bad.write_text(json.dumps(dict(spec, problem="median", colour=1)))
    assert main(["experiment", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "colour" in err
    bad.write_text("{not json")
    assert main(["experiment", str(bad)]) == 2
    assert main(["experiment", str(tmp_path / "none.json")]) == 1


def test_experiment_failed_cells_exit_1(tmp_path):
    spec = {"problem": "sparse_mean", "n_grid": [20], "d": 5, "s_star": 2, "reps": 1, "overrides": {"s": 9}}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(spec))
    assert main(["experiment", str(p), "--out-dir", str(tmp_path), "--jobs", "1"]) == 1


def _z(out):
    line = [l for l in out.splitlines() if l.startswith("z = ")][0]
    return float(line.split("=")[1])


def test_audit_commands(tmp_path, capsys):
    report = tmp_path / "rep.json"
    assert main(["audit", str(SPECS / "audit_sample_mean.json"), "--out", str(report)]) == 0
    assert _z(capsys.readouterr().out) > 10
    doc = json.loads(report.read_text())
    assert doc["config"]["estimator"]["name"] == "sample_mean"
    assert main(["audit", str(SPECS / "audit_constant.json")]) == 0
    assert abs(_z(capsys.readouterr().out)) < 3


@pytest.mark.parametrize(
    "spec",
    [
        {"n": 5},
        {"generator": {"model": "mean"}, "estimator": {"name": "nope"}, "n": 5, "d": 3, "reps": 2},
        {"generator": {"model": "poisson"}, "estimator": {"name": "sample_mean"}, "n": 5, "d": 3, "reps": 2},
        {"generator": {"model": "mean"}, "estimator": {"name": "private_mean"}, "n": 5, "d": 3, "reps": 2},
        {"generator": {"model": "mean"}, "estimator": {"name": "sample_mean"}, "n": 5, "d": 3, "reps": 0},
        [1, 2],
    ],
)
def test_audit_malformed_specs(tmp_path, spec):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(spec))
    assert main(["audit", str(p)]) == 2


def test_audit_private_estimators(tmp_path, capsys):
    spec = {
        "generator": {"model": "regression", "s_star": 3},
        "estimator": {"name": "private_sparse_regression", "epsilon": 0.5, "delta": 1e-5, "s_star": 3},
        "n": 60, "d": 30, "reps": 3, "seed": 1,
    }
    p = tmp_path / "a.json"
    p.write_text(json.dumps(spec))
    assert main(["audit", str(p)]) == 0
    assert "z = " in capsys.readouterr().out


def test_tune_commands(files, capsys):
    assert main(["tune", "quantile", "--in", str(files / "m.csv"), "--q", "0.975", "--eps", "1", "--seed", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert -50 <= doc["quantile"] <= 50 and doc["sums_to_requested"]
    assert main(["tune", "cv-sparsity", "sparse-mean", "--in", str(files / "m.csv"), "--grid", "2,3,5",
                 "--clip", "0,100", "--eps", "1", "--r", "12", "--seed", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["s"] in (2, 3, 5) and doc["sums_to_requested"]
    assert main(["tune", "cv-sparsity", "sparse-regression", "--in", str(files / "r.csv"), "--grid", "2,30",
                 "--clip", "0,10", "--eps", "1", "--r", "3"]) == 2
    assert main(["tune", "cv-sparsity", "sparse-mean", "--in", str(files / "m.csv"), "--grid", "a,b",
                 "--clip", "0,1", "--eps", "1"]) == 2
    assert main(["tune", "quantile", "--in", str(files / "m.csv"), "--q", "2", "--eps", "1"]) == 2


def test_module_entry_point(files):
    proc = subprocess.run(
        [sys.executable, "-m", "dpestim", "estimate", "mean", "--in", str(files / "m.csv"),
         "--eps", "0.5", "--delta", "1e-5", "--r", "3", "--seed", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and proc.stdout.count(",") == 7
    proc = subprocess.run([sys.executable, "-m", "dpestim", "estimate"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stderr
