"""Monte Carlo harness: synthetic data, private vs zero-noise error, rate fits."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Union

import numpy as np

from .core import (
    BudgetLedger,
    InvalidArgumentError,
    PrivacyBudget,
    RegressionData,
    derive_seed,
    format_float,
    make_rng,
)
from .mean import MeanConfig, private_mean, private_sparse_mean
from .regression import (
    low_dim_theory_config,
    private_linear_regression,
    private_sparse_regression,
    sparse_theory_config,
)
from .tuning import data_driven_truncation, theoretical_truncation

PROBLEMS = ("mean", "sparse_mean", "regression", "sparse_regression")
D_RULES = ("fixed", "n", "2n")

# Estimator knobs accepted under "overrides", by problem family.
_MEAN_KNOBS = {"R", "s"}
_REG_KNOBS = {"L", "c0", "cx", "rho", "R", "eta0", "T", "C", "B", "s"}


class SpecError(InvalidArgumentError):
    """Invalid experiment config; ``fields`` names the offenders."""

    def __init__(self, problems: dict):
        self.fields = sorted(problems)
        super().__init__("; ".join(f"{k}: {problems[k]}" for k in self.fields))


def delta_rule(n: int) -> float:
    """delta = 10 / n^1.1."""
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    return 10.0 / n**1.1


# ---------------------------------------------------------------------------
# Data generation


def _check_sparsity(d, s_star):
    if d < 1:
        raise InvalidArgumentError(f"d must be positive, got {d}")
    if s_star is not None and not 1 <= s_star <= d:
        raise InvalidArgumentError(f"s_star={s_star} must lie in [1, d={d}]")


def gen_mean_data(n: int, d: int, s_star: Optional[int] = None, seed=0):
    """Rows N(mu, I) with mu_j ~ Uniform(-10, 10) (the first ``s_star`` only if given).

    Returns:
        ``(X, mu)``.
    """
    _check_sparsity(d, s_star)
    rng = make_rng(seed)
    k = d if s_star is None else s_star
    mu = np.zeros(d)
    mu[:k] = rng.uniform(-10.0, 10.0, k)
    return mu + rng.standard_normal((n, d)), mu


def gen_regression_data(n: int, d: int, s_star: Optional[int] = None, sigma: float = 1.0, seed=0):
    """Design Uniform(-1/sqrt(d), 1/sqrt(d)), beta uniform on the unit sphere.

    With ``s_star`` the direction is drawn on the sphere of the first
    ``s_star`` coordinates. Noise is N(0, sigma^2).

    Returns:
        ``(RegressionData, beta)``.
    """
    _check_sparsity(d, s_star)
    if not sigma >= 0:
        raise InvalidArgumentError(f"sigma must be nonnegative, got {sigma}")
    rng = make_rng(seed)
    k = d if s_star is None else s_star
    g = rng.standard_normal(k)
    beta = np.zeros(d)
    beta[:k] = g / np.linalg.norm(g)
    a = 1.0 / math.sqrt(d)
    x = rng.uniform(-a, a, (n, d))
    y = x @ beta + sigma * rng.standard_normal(n)
    return RegressionData(x, y), beta


# ---------------------------------------------------------------------------
# Specification


@dataclass(frozen=True)
class ExperimentSpec:
    """One error-versus-n experiment.

    ``d_rule`` is ``"fixed"`` (use ``d``), ``"n"`` or ``"2n"``. ``delta`` is
    either a number or ``"rule"`` for :func:`delta_rule`. ``truncation`` is
    ``"theory"``, ``"data"`` (private quantiles costing ``truncation_share``
    of the budget) or a fixed positive level. ``overrides`` passes estimator
    settings such as ``s``, ``T`` or ``eta0``. ``noise_multiplier`` scales
    every noise draw of the private run (``0`` is a test mode).
    """

    problem: str
    n_grid: tuple
    d_rule: str = "fixed"
    d: Optional[int] = None
    s_star: Optional[int] = None
    epsilon: float = 0.5
    delta: Union[str, float] = "rule"
    reps: int = 10
    seed: int = 0
    sigma: float = 1.0
    truncation: Union[str, float] = "theory"
    truncation_share: float = 0.1
    noise_multiplier: float = 1.0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.n_grid, (list, tuple, np.ndarray)):
            object.__setattr__(self, "n_grid", tuple(int(n) if _is_int(n) else n for n in self.n_grid))
        if isinstance(self.overrides, dict):
            object.__setattr__(self, "overrides", dict(self.overrides))
        bad = _validate(self)
        if bad:
            raise SpecError(bad)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        if not isinstance(raw, dict):
            raise SpecError({"<root>": "spec must be a JSON object"})
        known = {f.name for f in fields(cls)}
        bad = {k: "unknown field" for k in raw if k not in known}
        for req in ("problem", "n_grid"):
            if req not in raw:
                bad[req] = "required"
        if bad:
            raise SpecError(bad)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise SpecError({"<root>": str(exc)}) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def dim(self, n: int) -> int:
        return {"fixed": self.d, "n": n, "2n": 2 * n}[self.d_rule]

    def delta_for(self, n: int) -> float:
        return delta_rule(n) if self.delta == "rule" else float(self.delta)

    def cells(self) -> list:
        return [(n, rep) for n in self.n_grid for rep in range(self.reps)]


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _validate(spec: ExperimentSpec) -> dict:
    bad = {}
    if spec.problem not in PROBLEMS:
        bad["problem"] = f"must be one of {PROBLEMS}"
    if not isinstance(spec.n_grid, tuple) or not spec.n_grid or not all(_is_int(n) and n >= 2 for n in spec.n_grid):
        bad["n_grid"] = "must be a nonempty list of integers >= 2"
    if spec.d_rule not in D_RULES:
        bad["d_rule"] = f"must be one of {D_RULES}"
    elif spec.d_rule == "fixed" and not (_is_int(spec.d) and spec.d >= 1):
        bad["d"] = "a positive integer is required when d_rule is 'fixed'"
    sparse = spec.problem in ("sparse_mean", "sparse_regression")
    if sparse and not (_is_int(spec.s_star) and spec.s_star >= 1):
        bad["s_star"] = "a positive integer is required for sparse problems"
    elif spec.s_star is not None and not (_is_int(spec.s_star) and spec.s_star >= 1):
        bad["s_star"] = "must be a positive integer"
    if "d" not in bad and "n_grid" not in bad and "d_rule" not in bad and _is_int(spec.s_star):
        if any(spec.s_star > spec.dim(n) for n in spec.n_grid):
            bad["s_star"] = "exceeds the dimension at some grid point"
    if not (_is_num(spec.epsilon) and 0 < spec.epsilon < math.inf):
        bad["epsilon"] = "must be positive and finite"
    if spec.delta != "rule" and not (_is_num(spec.delta) and 0 < spec.delta < 1):
        bad["delta"] = "must be 'rule' or a number in (0, 1)"
    if not (_is_int(spec.reps) and spec.reps >= 1):
        bad["reps"] = "must be an integer >= 1"
    if not (_is_int(spec.seed) and 0 <= spec.seed < 2**64):
        bad["seed"] = "must be a nonnegative 64-bit integer"
    if not (_is_num(spec.sigma) and spec.sigma > 0):
        bad["sigma"] = "must be positive"
    t = spec.truncation
    if not (t in ("theory", "data") or (_is_num(t) and t > 0)):
        bad["truncation"] = "must be 'theory', 'data' or a positive number"
    if not (_is_num(spec.truncation_share) and 0 < spec.truncation_share < 1):
        bad["truncation_share"] = "must lie in (0, 1)"
    if not (_is_num(spec.noise_multiplier) and spec.noise_multiplier >= 0):
        bad["noise_multiplier"] = "must be nonnegative"
    if not isinstance(spec.overrides, dict):
        bad["overrides"] = "must be an object"
    else:
        allowed = _MEAN_KNOBS if spec.problem in ("mean", "sparse_mean") else _REG_KNOBS
        extra = sorted(set(spec.overrides) - allowed)
        if extra:
            bad["overrides"] = f"unsupported keys {extra}; allowed {sorted(allowed)}"
    return bad


# ---------------------------------------------------------------------------
# One cell


def _truncation(spec, n, sample, budget, seed, noise_multiplier):
    """Return (R or (lo, hi), remaining budget, ledger entries)."""
    if "R" in spec.overrides:
        return float(spec.overrides["R"]), budget, []
    if _is_num(spec.truncation):
        return float(spec.truncation), budget, []
    if spec.truncation == "theory":
        if spec.problem in ("mean", "sparse_mean"):
            return theoretical_truncation(spec.sigma, n), budget, []
        return None, budget, []  # the regression configs derive R themselves
    part, rest = budget.fraction(spec.truncation_share)
    led = BudgetLedger()
    lo, hi = data_driven_truncation(
        sample, part, seed, noise_multiplier=noise_multiplier, ledger=led
    )
    return (lo, hi), rest, led.entries


def _estimate(spec, n, d, data, budget, seed, noise_multiplier):
    ledger = BudgetLedger()
    is_mean = spec.problem in ("mean", "sparse_mean")
    sample = data if is_mean else data.y
    trunc, rest, spent = _truncation(spec, n, sample, budget, derive_seed(seed, 0), noise_multiplier)
    ledger.entries.extend(spent)
    est_seed = derive_seed(seed, 1)
    ov = dict(spec.overrides)
    ov.pop("R", None)

    if is_mean:
        kw = dict(budget=rest, seed=est_seed, noise_multiplier=noise_multiplier)
        if spec.problem == "sparse_mean":
            kw["s"] = int(ov.get("s", spec.s_star))
        if isinstance(trunc, tuple):
            lo, hi = trunc
            if spec.problem == "sparse_mean":
                # Peeling needs a window centered at zero.
                R = max(abs(lo), abs(hi))
                cfg = MeanConfig(R=R if R > 0 else 1e-12, **kw)
            else:
                if not hi > lo:
                    hi = lo + 1e-12
                cfg = MeanConfig.from_interval(lo, hi, **kw)
        else:
            cfg = MeanConfig(R=trunc, **kw)
        fn = private_sparse_mean if cfg.s is not None else private_mean
        return fn(data, cfg, ledger=ledger), ledger

    if isinstance(trunc, tuple):
        trunc = max(abs(trunc[0]), abs(trunc[1]), 1e-12)
    theory = {k: ov.pop(k) for k in ("L", "c0", "cx", "rho") if k in ov}
    if spec.problem == "sparse_regression":
        cfg = sparse_theory_config(
            n, spec.s_star, rest, sigma=spec.sigma, R=trunc, seed=est_seed, **theory
        )
        fn = private_sparse_regression
    else:
        theory.pop("rho", None)
        cfg = low_dim_theory_config(n, d, rest, sigma=spec.sigma, R=trunc, seed=est_seed, **theory)
        fn = private_linear_regression
    cfg = replace(cfg, noise_multiplier=noise_multiplier, **ov)
    beta, _ = fn(data, cfg, ledger=ledger)
    return beta, ledger


def run_cell(spec: ExperimentSpec, n: int, rep: int) -> dict:
    """Run one (n, rep) cell; failures are captured in the row, not raised."""
    d = spec.dim(n)
    delta = spec.delta_for(n)
    cell_seed = derive_seed(spec.seed, n, rep)
    row = {
        "problem": spec.problem,
        "n": n,
        "d": d,
        "s": spec.overrides.get("s", spec.s_star),
        "epsilon": float(spec.epsilon),
        "delta": delta,
        "rep": rep,
        "seed": cell_seed,
        "err_private": math.nan,
        "err_nonprivate": math.nan,
        "valid": True,
        "error": "",
    }
    try:
        data_seed = derive_seed(cell_seed, 0)
        if spec.problem in ("mean", "sparse_mean"):
            data, truth = gen_mean_data(n, d, spec.s_star if spec.problem == "sparse_mean" else None, data_seed)
        else:
            s_star = spec.s_star if spec.problem == "sparse_regression" else None
            data, truth = gen_regression_data(n, d, s_star, spec.sigma, data_seed)
        budget = PrivacyBudget(spec.epsilon, delta)
        est_seed = derive_seed(cell_seed, 1)
        priv, ledger = _estimate(spec, n, d, data, budget, est_seed, float(spec.noise_multiplier))
        plain, _ = _estimate(spec, n, d, data, budget, est_seed, 0.0)
        row["err_private"] = float(np.linalg.norm(priv - truth))
        row["err_nonprivate"] = float(np.linalg.norm(plain - truth))
        total = ledger.total()
        if total is None or (total.eps_exact, total.delta_exact) != (budget.eps_exact, budget.delta_exact):
            raise RuntimeError("budget ledger does not sum to the requested budget")
        if spec.problem == "sparse_regression" and row["s"] is None:
            row["s"] = sparse_theory_config(n, spec.s_star, budget, sigma=spec.sigma).s
    except Exception as exc:  # recorded per cell; the experiment continues
        row["valid"] = False
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _cell_job(args):
    spec_dict, n, rep = args
    return run_cell(ExperimentSpec.from_dict(spec_dict), n, rep)


# ---------------------------------------------------------------------------
# Results


CSV_COLUMNS = ("problem", "n", "d", "s", "epsilon", "delta", "rep", "seed", "err_private", "err_nonprivate")


def loglog_slope(ns, values) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    ns, values = np.asarray(ns, float), np.asarray(values, float)
    if ns.size < 2 or np.any(values <= 0) or not np.all(np.isfinite(values)):
        return math.nan
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list

    def _cell_errors(self, n, key):
        return np.array([r[key] for r in self.rows if r["n"] == n and r["valid"]], dtype=float)

    def aggregates(self) -> list:
        out = []
        for n in self.spec.n_grid:
            entry = {"n": n, "d": self.spec.dim(n), "count": 0}
            for key, tag in (("err_private", "private"), ("err_nonprivate", "nonprivate")):
                e = self._cell_errors(n, key)
                entry["count"] = int(e.size)
                entry[f"mean_{tag}"] = float(e.mean()) if e.size else math.nan
                entry[f"se_{tag}"] = float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else math.nan
                entry[f"mse_{tag}"] = float(np.mean(e**2)) if e.size else math.nan
            gaps = self._cell_errors(n, "err_private") - self._cell_errors(n, "err_nonprivate")
            entry["mean_gap"] = float(gaps.mean()) if gaps.size else math.nan
            entry["se_gap"] = float(gaps.std(ddof=1) / math.sqrt(gaps.size)) if gaps.size > 1 else math.nan
            out.append(entry)
        return out

    def column(self, name) -> np.ndarray:
        return np.array([a[name] for a in self.aggregates()])

    def slopes(self) -> dict:
        agg = self.aggregates()
        ns = [a["n"] for a in agg]
        return {
            "private": loglog_slope(ns, [a["mean_private"] for a in agg]),
            "nonprivate": loglog_slope(ns, [a["mean_nonprivate"] for a in agg]),
            "private_mse": loglog_slope(ns, [a["mse_private"] for a in agg]),
            "nonprivate_mse": loglog_slope(ns, [a["mse_nonprivate"] for a in agg]),
        }

    @property
    def invalid(self) -> list:
        return [r for r in self.rows if not r["valid"]]

    def to_csv(self, path_or_file=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(
                [format_float(r[c]) if isinstance(r[c], float) else ("" if r[c] is None else r[c])
                 for c in CSV_COLUMNS]
            )
        text = buf.getvalue()
        if path_or_file is not None:
            if hasattr(path_or_file, "write"):
                path_or_file.write(text)
            else:
                with open(path_or_file, "w", newline="") as fh:
                    fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "aggregates": self.aggregates(),
            "slopes": self.slopes(),
            "invalid_cells": [
                {"n": r["n"], "rep": r["rep"], "error": r["error"]} for r in self.invalid
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(_jsonable(self.summary()), **kw)


def _jsonable(obj):
    # NaN is not valid JSON; emit null instead.
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """Run every (n, rep) cell; the result does not depend on ``jobs``."""
    cells = spec.cells()
    if jobs > 1 and len(cells) > 1:
        payload = [(spec.to_dict(), n, rep) for n, rep in cells]
        with ProcessPoolExecutor(min(jobs, len(cells))) as pool:
            rows = list(pool.map(_cell_job, payload, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        rows = [run_cell(spec, n, rep) for n, rep in cells]
    return ExperimentResult(spec, rows)
