"""Command-line front end: ``dpestim {estimate,experiment,audit,tune}``.

Exit codes are 0 on success, 1 on data or runtime failures and 2 on usage
or validation errors. ``DP_ESTIM_SEED`` supplies the seed when ``--seed`` is
absent.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audit import GaussianMeanModel, LinearModel, run_membership_audit
from .core import (
    BudgetLedger,
    InvalidArgumentError,
    PrivacyBudget,
    RegressionData,
    UnsupportedError,
    derive_seed,
    read_matrix_csv,
    read_regression_csv,
    write_matrix_csv,
)
from .mean import MeanConfig, private_mean, private_sparse_mean, truncated_mean
from .regression import (
    RegressionConfig,
    low_dim_theory_config,
    private_linear_regression,
    private_sparse_regression,
    sparse_theory_config,
)
from .sim import ExperimentSpec, SpecError, _jsonable, default_jobs, run_experiment
from .tuning import data_driven_truncation, private_cv_sparsity, private_quantile

SEED_ENV = "DP_ESTIM_SEED"


class UsageError(Exception):
    """Bad flags or a spec that fails validation (exit 2)."""


class DataError(Exception):
    """Unreadable or malformed input data (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        seed = int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    if not 0 <= seed < 2**64:
        raise UsageError(f"{SEED_ENV} must lie in [0, 2^64)")
    return seed


def _budget(eps, delta):
    try:
        return PrivacyBudget(eps, delta)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None


def _dumps(obj) -> str:
    # json writes floats with repr, i.e. shortest round-trip form.
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _ledger_block(requested: PrivacyBudget, ledger: BudgetLedger) -> dict:
    total = ledger.total()
    exact = total is not None and (total.eps_exact, total.delta_exact) == (
        requested.eps_exact,
        requested.delta_exact,
    )
    return {"requested": requested.to_dict(), "ledger": ledger.to_dict(), "sums_to_requested": exact}


def _load(path, regression):
    try:
        return read_regression_csv(path) if regression else read_matrix_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except InvalidArgumentError as exc:
        raise DataError(str(exc)) from None


# ---------------------------------------------------------------------------
# estimate


def _estimate_mean(args, x, budget, seed, ledger):
    n, d = x.shape
    sparse = args.kind == "sparse-mean"
    if sparse:
        if args.s is None:
            raise UsageError("sparse-mean requires --s")
        if args.s > d:
            raise UsageError(f"--s={args.s} exceeds the number of columns d={d} (need s <= d)")
    kw = dict(seed=derive_seed(seed, 1), s=args.s if sparse else None)
    if args.r is not None:
        cfg = MeanConfig(R=args.r, budget=budget, **kw)
    else:
        part, rest = budget.fraction(args.trunc_share)
        lo, hi = data_driven_truncation(x, part, derive_seed(seed, 0), ledger=ledger)
        if sparse:
            cfg = MeanConfig(R=max(abs(lo), abs(hi), 1e-12), budget=rest, **kw)
        else:
            cfg = MeanConfig.from_interval(lo, hi if hi > lo else lo + 1e-12, rest, **kw)
    fn = private_sparse_mean if sparse else private_mean
    est = fn(x, cfg, ledger=ledger)
    echo = {"R": cfg.R, "center": cfg.center, "s": cfg.s, "n": n, "d": d}
    return est, echo


def _estimate_regression(args, data: RegressionData, budget, seed, ledger):
    n, d = data.n, data.d
    sparse = args.kind == "sparse-regression"
    if sparse:
        if args.s is None:
            raise UsageError("sparse-regression requires --s")
        if args.s > d:
            raise UsageError(f"--s={args.s} exceeds the number of feature columns d={d} (need s <= d)")
    est_seed = derive_seed(seed, 1)
    if sparse:
        base = sparse_theory_config(n, args.s, budget, sigma=args.sigma, R=args.r, seed=est_seed)
        base = replace(base, s=args.s)
    else:
        base = low_dim_theory_config(n, d, budget, sigma=args.sigma, R=args.r, seed=est_seed)
    ov = {k: v for k, v in (("T", args.t), ("eta0", args.eta0), ("B", args.b)) if v is not None}
    if args.c is not None:
        ov.update(C=args.c, c0=None)
    try:
        cfg = replace(base, **ov)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    fn = private_sparse_regression if sparse else private_linear_regression
    beta, _ = fn(data, cfg, ledger=ledger)
    echo = {k: getattr(cfg, k) for k in ("eta0", "T", "R", "C", "B", "s")}
    echo.update(n=n, d=d)
    return beta, echo


def cmd_estimate(args) -> int:
    seed = _resolve_seed(args.seed)
    budget = _budget(args.eps, args.delta)
    if args.r is not None and not (args.r > 0 and math.isfinite(args.r)):
        raise UsageError("--r must be positive and finite")
    if args.s is not None and args.s < 1:
        raise UsageError("--s must be >= 1")
    if args.t is not None and args.t < 1:
        raise UsageError("--t must be >= 1")
    regression = args.kind in ("regression", "sparse-regression")
    data = _load(args.inp, regression)
    ledger = BudgetLedger()
    if regression:
        est, echo = _estimate_regression(args, data, budget, seed, ledger)
    else:
        est, echo = _estimate_mean(args, data, budget, seed, ledger)

    out = args.out
    buf = io.StringIO()
    write_matrix_csv(buf, est)
    _write_text(out, buf.getvalue())
    sidecar = args.sidecar or (f"{out}.json" if out not in (None, "-") else None)
    if sidecar:
        meta = {
            "command": "estimate",
            "estimator": args.kind,
            "input": str(args.inp),
            "seed": seed,
            "config": echo,
            **_ledger_block(budget, ledger),
        }
        Path(sidecar).write_text(_dumps(meta))
    return 0


# ---------------------------------------------------------------------------
# experiment


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _load_spec(path, seed_flag):
    raw = _read_json(path)
    if isinstance(raw, dict) and (seed_flag is not None or os.environ.get(SEED_ENV)):
        raw = dict(raw, seed=_resolve_seed(seed_flag))
    try:
        return ExperimentSpec.from_dict(raw)
    except SpecError as exc:
        raise UsageError(f"invalid experiment spec (fields: {', '.join(exc.fields)}): {exc}") from None


def _fmt(v):
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


def cmd_experiment(args) -> int:
    spec = _load_spec(args.spec, args.seed)
    if args.dry_run:
        print(f"problem={spec.problem} reps={spec.reps} seed={spec.seed} epsilon={spec.epsilon!r}")
        for n in spec.n_grid:
            print(f"n={n} d={spec.dim(n)} delta={spec.delta_for(n)!r}")
        print(f"cells={len(spec.cells())}")
        return 0
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    result = run_experiment(spec, jobs=jobs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.spec).stem
    result.to_csv(out_dir / f"{stem}.csv")
    (out_dir / f"{stem}.summary.json").write_text(_dumps(result.summary()))

    print(f"{'n':>8} {'d':>8} {'private':>12} {'se':>10} {'nonprivate':>12} {'se':>10} {'count':>6}")
    for a in result.aggregates():
        print(
            f"{a['n']:>8} {a['d']:>8} {_fmt(a['mean_private']):>12} {_fmt(a['se_private']):>10} "
            f"{_fmt(a['mean_nonprivate']):>12} {_fmt(a['se_nonprivate']):>10} {a['count']:>6}"
        )
    sl = result.slopes()
    print(f"log-log slope: private {_fmt(sl['private'])}, nonprivate {_fmt(sl['nonprivate'])}")
    if result.invalid:
        print(f"{len(result.invalid)} cell(s) failed; see the summary JSON", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# audit

_AUDIT_FIELDS = {"generator", "estimator", "n", "d", "reps", "seed", "n_out", "threshold", "jobs"}


class _Estimator:
    """Picklable, thread-safe estimator callbacks built from an audit spec."""

    thread_safe = True

    def __init__(self, name, params, d):
        self.name, self.params, self.d = name, params, d

    def __call__(self, data, seed):
        p = self.params
        if self.name == "sample_mean":
            return np.asarray(data).mean(axis=0)
        if self.name == "constant":
            return np.full(self.d, float(p.get("value", 0.0)))
        budget = PrivacyBudget(p["epsilon"], p.get("delta", 0.0))
        if self.name == "truncated_mean":
            return truncated_mean(data, p["R"])
        if self.name == "private_mean":
            return private_mean(data, MeanConfig(R=p["R"], budget=budget, seed=seed))
        if self.name == "private_sparse_mean":
            return private_sparse_mean(data, MeanConfig(R=p["R"], budget=budget, s=p["s"], seed=seed))
        if self.name == "least_squares":
            return np.linalg.lstsq(data.x, data.y, rcond=None)[0]
        if self.name == "private_regression":
            cfg = low_dim_theory_config(data.n, data.d, budget, seed=seed)
            return private_linear_regression(data, _with(cfg, p))[0]
        if self.name == "private_sparse_regression":
            cfg = sparse_theory_config(data.n, p["s_star"], budget, seed=seed)
            return private_sparse_regression(data, _with(cfg, p))[0]
        raise InvalidArgumentError(f"unknown estimator {self.name!r}")


def _with(cfg: RegressionConfig, p):
    ov = {k: p[k] for k in ("eta0", "T", "R", "C", "B", "s") if k in p}
    return replace(cfg, **ov) if ov else cfg


_ESTIMATORS = {
    "sample_mean": (),
    "constant": (),
    "truncated_mean": ("R",),
    "private_mean": ("epsilon", "delta", "R"),
    "private_sparse_mean": ("epsilon", "delta", "R", "s"),
    "least_squares": (),
    "private_regression": ("epsilon", "delta"),
    "private_sparse_regression": ("epsilon", "delta", "s_star"),
}


def _audit_setup(raw):
    bad = {}
    if not isinstance(raw, dict):
        raise UsageError("audit spec must be a JSON object")
    for k in raw:
        if k not in _AUDIT_FIELDS:
            bad[k] = "unknown field"
    for k in ("generator", "estimator", "n", "d", "reps"):
        if k not in raw:
            bad[k] = "required"
    for k in ("n", "d", "reps"):
        v = raw.get(k)
        if k in raw and not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
            bad[k] = "must be a positive integer"
    gen = raw.get("generator", {})
    est = raw.get("estimator", {})
    generator = None
    if isinstance(gen, dict) and "generator" in raw:
        model = gen.get("model")
        opts = {k: v for k, v in gen.items() if k != "model"}
        try:
            if model == "mean":
                generator = GaussianMeanModel(**opts)
            elif model == "regression":
                generator = LinearModel(**opts)
            else:
                bad["generator.model"] = "must be 'mean' or 'regression'"
        except TypeError as exc:
            bad["generator"] = str(exc)
    elif "generator" in raw:
        bad["generator"] = "must be an object"
    estimator = None
    if isinstance(est, dict) and "estimator" in raw:
        name = est.get("name")
        if name not in _ESTIMATORS:
            bad["estimator.name"] = f"must be one of {sorted(_ESTIMATORS)}"
        else:
            missing = [k for k in _ESTIMATORS[name] if k not in est]
            if missing:
                bad["estimator"] = f"{name} needs {missing}"
            else:
                params = {k: v for k, v in est.items() if k != "name"}
                estimator = _Estimator(name, params, raw.get("d"))
    elif "estimator" in raw:
        bad["estimator"] = "must be an object"
    if bad:
        fields = ", ".join(sorted(bad))
        raise UsageError(f"invalid audit spec (fields: {fields}): " + "; ".join(f"{k}: {bad[k]}" for k in sorted(bad)))
    return generator, estimator


def cmd_audit(args) -> int:
    raw = _read_json(args.spec)
    generator, estimator = _audit_setup(raw)
    seed = args.seed if args.seed is not None else (
        _resolve_seed(None) if os.environ.get(SEED_ENV) else raw.get("seed", 0)
    )
    jobs = args.jobs if args.jobs is not None else raw.get("jobs", 1)
    try:
        report = run_membership_audit(
            generator,
            estimator,
            raw["n"],
            raw["d"],
            raw["reps"],
            seed,
            n_out=raw.get("n_out"),
            threshold=raw.get("threshold"),
            jobs=jobs,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    report.config["estimator"] = {"name": estimator.name, **estimator.params}
    if args.out:
        _write_text(args.out, report.to_json(indent=2, sort_keys=True) + "\n")
    summ = report.summary()
    print(f"z = {summ['z']!r}")
    print(f"mean_in = {summ['mean_in']!r}, mean_out = {summ['mean_out']!r} (se {summ['se_out']!r})")
    return 0


# ---------------------------------------------------------------------------
# tune


def cmd_tune_quantile(args) -> int:
    seed = _resolve_seed(args.seed)
    budget = _budget(args.eps, 0.0)
    if not 0 < args.q < 1:
        raise UsageError("--q must lie in (0, 1)")
    if not args.lo < args.hi:
        raise UsageError("--lo must be smaller than --hi")
    x = _load(args.inp, False)
    group = 1 if x.shape[1] == 1 else x.shape[1]
    val = private_quantile(
        x.reshape(-1), args.q, budget, (args.lo, args.hi), args.bins, seed, group_size=group
    )
    ledger = BudgetLedger()
    ledger.spend("quantile", budget)
    _write_text(args.out, _dumps({"q": args.q, "quantile": val, "seed": seed, **_ledger_block(budget, ledger)}))
    return 0


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _pair(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    return lo, hi


def cmd_tune_cv(args) -> int:
    seed = _resolve_seed(args.seed)
    budget = _budget(args.eps, 0.0)
    regression = args.problem == "sparse-regression"
    data = _load(args.inp, regression)
    d = data.d if regression else data.shape[1]
    bad = [s for s in args.grid if not 1 <= s <= d]
    if bad:
        raise UsageError(f"--grid values {bad} must lie in [1, d={d}]")
    if args.r is None or not args.r > 0:
        raise UsageError("--r (a positive truncation level) is required")
    ledger = BudgetLedger()
    try:
        s, scores = private_cv_sparsity(
            data, args.grid, args.folds, args.clip, budget, seed, R=args.r, ledger=ledger,
            return_scores=True,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    out = {"s": s, "grid": args.grid, "cv_scores": scores.tolist(), "seed": seed, **_ledger_block(budget, ledger)}
    _write_text(args.out, _dumps(out))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dpestim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="run one private estimator on a CSV file")
    est.add_argument("kind", choices=["mean", "sparse-mean", "regression", "sparse-regression"])
    est.add_argument("--in", dest="inp", required=True, help="headerless CSV; regression uses the last column as y")
    est.add_argument("--eps", type=float, required=True)
    est.add_argument("--delta", type=float, required=True)
    est.add_argument("--r", type=float, help="truncation level (default: data-driven for means, theory for regression)")
    est.add_argument("--s", type=int, help="sparsity of the output")
    est.add_argument("--t", type=int, help="iterations (regression)")
    est.add_argument("--eta0", type=float, help="step size (regression)")
    est.add_argument("--c", type=float, help="feasibility radius (regression)")
    est.add_argument("--b", type=float, help="gradient sensitivity scale (regression)")
    est.add_argument("--sigma", type=float, default=1.0, help="noise level for default regression settings")
    est.add_argument("--trunc-share", type=float, default=0.1, help="budget share for data-driven truncation")
    est.add_argument("--seed", type=int)
    est.add_argument("--out", help="estimate CSV (default stdout)")
    est.add_argument("--sidecar", help="JSON ledger path (default <out>.json)")
    est.set_defaults(func=cmd_estimate)

    exp = sub.add_parser("experiment", help="run a simulation grid from a JSON spec")
    exp.add_argument("spec")
    exp.add_argument("--dry-run", action="store_true")
    exp.add_argument("--jobs", type=int)
    exp.add_argument("--out-dir", default=".")
    exp.add_argument("--seed", type=int)
    exp.set_defaults(func=cmd_experiment)

    aud = sub.add_parser("audit", help="run a membership-inference audit from a JSON spec")
    aud.add_argument("spec")
    aud.add_argument("--out", help="report JSON path")
    aud.add_argument("--jobs", type=int)
    aud.add_argument("--seed", type=int)
    aud.set_defaults(func=cmd_audit)

    tune = sub.add_parser("tune", help="private tuning helpers")
    tsub = tune.add_subparsers(dest="tuner", required=True, parser_class=_Parser)
    q = tsub.add_parser("quantile")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--q", type=float, required=True)
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--lo", type=float, default=-50.0)
    q.add_argument("--hi", type=float, default=50.0)
    q.add_argument("--bins", type=int, default=2000)
    q.add_argument("--seed", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_tune_quantile)
    cv = tsub.add_parser("cv-sparsity")
    cv.add_argument("problem", choices=["sparse-mean", "sparse-regression"])
    cv.add_argument("--in", dest="inp", required=True)
    cv.add_argument("--grid", type=_int_list, required=True, help="e.g. 10,20,30")
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--clip", type=_pair, required=True, help="lo,hi")
    cv.add_argument("--eps", type=float, required=True)
    cv.add_argument("--r", type=float)
    cv.add_argument("--seed", type=int)
    cv.add_argument("--out")
    cv.set_defaults(func=cmd_tune_cv)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvalidArgumentError, UnsupportedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
