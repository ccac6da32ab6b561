"""Data-driven, private choices of the truncation level and the sparsity."""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    BudgetLedger,
    InvalidArgumentError,
    PrivacyBudget,
    RegressionData,
    SeedLike,
    as_data_matrix,
    make_rng,
)
from .mechanisms import SensitivityBound, exponential_mechanism, laplace_vector
from .peeling import hard_threshold
from .mean import truncated_mean
from .regression import truncated_half_gradient


def private_quantile(
    x,
    q: float,
    budget: PrivacyBudget,
    bounds: tuple = (-50.0, 50.0),
    bins: int = 2000,
    seed: SeedLike = 0,
    *,
    group_size: int = 1,
    noise_multiplier: float = 1.0,
) -> float:
    """Quantile from a Laplace-perturbed histogram.

    ``x`` is clipped to ``bounds`` and binned into ``bins`` equal cells. The
    normalized counts receive Laplace noise and the left edge of the first
    cell whose noisy cumulative mass reaches ``q`` is returned (``hi`` if
    none does).

    One individual may own ``group_size`` entries of ``x`` (a pooled data
    matrix has ``group_size = d``). Replacing that individual changes the
    normalized histogram by at most ``2 group_size / len(x)`` in L1, which
    sets the noise scale; the release is (eps, 0)-DP.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise InvalidArgumentError("private_quantile needs a nonempty sample")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("sample contains non-finite values")
    lo, hi = map(float, bounds)
    if not lo < hi:
        raise InvalidArgumentError(f"bounds must satisfy lo < hi, got {bounds}")
    if int(bins) != bins or bins < 2:
        raise InvalidArgumentError(f"bins must be an integer >= 2, got {bins}")
    if not 0 < q < 1:
        raise InvalidArgumentError(f"q must lie in (0, 1), got {q}")
    bins = int(bins)
    rng = make_rng(seed)

    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(np.clip(x, lo, hi), bins=edges)
    mass = counts / x.size
    scale = 2.0 * group_size / (x.size * budget.epsilon) * noise_multiplier
    if scale > 0:
        mass = mass + laplace_vector(bins, scale, rng)
    cum = np.cumsum(mass)
    hit = np.flatnonzero(cum >= q)
    return float(edges[hit[0]]) if hit.size else hi


def data_driven_truncation(
    x,
    budget: PrivacyBudget,
    seed: SeedLike = 0,
    *,
    bounds: tuple = (-50.0, 50.0),
    bins: int = 2000,
    quantiles: tuple = (0.025, 0.975),
    noise_multiplier: float = 1.0,
    ledger: Optional[BudgetLedger] = None,
) -> tuple:
    """Private 2.5% and 97.5% quantiles of the pooled entries of ``x``.

    The budget is split evenly between the two quantile releases. A 1-d
    input is treated as one value per individual (e.g. regression
    responses).
    """
    arr = np.asarray(x, dtype=np.float64)
    group = 1 if arr.ndim == 1 else as_data_matrix(arr).shape[1]
    rng = make_rng(seed)
    b_lo, b_hi = budget.split(2)
    kw = dict(bounds=bounds, bins=bins, group_size=group, noise_multiplier=noise_multiplier)
    lo = private_quantile(arr.reshape(-1), quantiles[0], b_lo, seed=rng, **kw)
    hi = private_quantile(arr.reshape(-1), quantiles[1], b_hi, seed=rng, **kw)
    if ledger is not None:
        ledger.spend("quantile_lo", b_lo)
        ledger.spend("quantile_hi", b_hi)
    return lo, hi


def theoretical_truncation(sigma: float, n: int) -> float:
    """R = 4 sigma sqrt(log n)."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    return 4.0 * sigma * math.sqrt(math.log(n))


def sparsity_grid(s_star: int, points: int = 7) -> list:
    """Uniform integer grid from s*/2 to 2 s*."""
    vals = np.linspace(s_star / 2.0, 2.0 * s_star, points)
    return sorted({max(1, int(round(v))) for v in vals})


# ---------------------------------------------------------------------------
# Cross-validation over the sparsity level


def _fold_ids(n: int, folds: int) -> np.ndarray:
    # Contiguous folds; rows are assumed exchangeable.
    return np.arange(n) * folds // n


def _default_fit(data, R: float):
    if isinstance(data, RegressionData):
        def fit(train: RegressionData, s: int) -> np.ndarray:
            # Zero-noise IHT with a step matched to the design's curvature.
            eta = 1.0 / max(np.linalg.norm(train.x, 2) ** 2 / train.n, 1e-12)
            beta = np.zeros(train.d)
            for _ in range(50):
                beta = hard_threshold(beta - eta * truncated_half_gradient(train, beta, R), s)
            return beta
        return fit

    def fit(train: np.ndarray, s: int) -> np.ndarray:
        return hard_threshold(truncated_mean(train, R), s)
    return fit


def _row_losses(data, est: np.ndarray) -> np.ndarray:
    if isinstance(data, RegressionData):
        return (data.y - data.x @ est) ** 2
    return np.sum((data - est) ** 2, axis=1)


def cv_scores(data, grid: Sequence[int], folds: int, score_clip: tuple, fit: Callable) -> np.ndarray:
    """Clipped k-fold CV error of ``fit`` for each candidate sparsity."""
    n = data.n if isinstance(data, RegressionData) else data.shape[0]
    ids = _fold_ids(n, folds)
    lo, hi = score_clip
    scores = np.zeros(len(grid))
    for k in range(folds):
        test, train = ids == k, ids != k
        tr = data.rows(train) if isinstance(data, RegressionData) else data[train]
        te = data.rows(test) if isinstance(data, RegressionData) else data[test]
        for g, s in enumerate(grid):
            losses = np.clip(_row_losses(te, fit(tr, s)), lo, hi)
            scores[g] += losses.mean() / folds
    return scores


def private_cv_sparsity(
    data,
    grid: Sequence[int],
    folds: int,
    score_clip: tuple,
    budget: PrivacyBudget,
    seed: SeedLike = 0,
    *,
    fit: Optional[Callable] = None,
    R: Optional[float] = None,
    ledger: Optional[BudgetLedger] = None,
    noise_multiplier: float = 1.0,
    return_scores: bool = False,
):
    """Choose a sparsity level by clipped cross-validation and the exponential mechanism.

    The CV fits are the zero-noise versions of the estimators (exact hard
    thresholding); they are never released, and only the selection spends
    ``budget``. Per-row losses are clipped to ``score_clip`` so one row moves
    a fold's mean loss by at most ``(hi - lo) / m`` with ``m`` the smallest
    fold size (``n / folds`` when it divides evenly), which is the
    sensitivity handed to the exponential mechanism.

    Args:
        data: data matrix (sparse mean) or :class:`RegressionData`.
        grid: candidate sparsity levels.
        folds: number of CV folds (>= 2).
        score_clip: ``(lo, hi)`` clipping range for per-row losses.
        budget: selection budget; only ``epsilon`` is used.
        fit: ``fit(train, s) -> estimate``; defaults to exact hard
            thresholding of the truncated mean, or zero-noise IHT.
        R: truncation level used by the default fits.
        noise_multiplier: ``0`` selects the exact argmin (test mode).
    """
    grid = [int(s) for s in grid]
    if not grid:
        raise InvalidArgumentError("sparsity grid is empty")
    if int(folds) != folds or folds < 2:
        raise InvalidArgumentError(f"folds must be an integer >= 2, got {folds}")
    lo, hi = score_clip
    if not lo < hi:
        raise InvalidArgumentError(f"score_clip must satisfy lo < hi, got {score_clip}")
    if not isinstance(data, RegressionData):
        data = as_data_matrix(data)
    n, d = (data.n, data.d) if isinstance(data, RegressionData) else data.shape
    bad = [s for s in grid if not 1 <= s <= d]
    if bad:
        raise InvalidArgumentError(f"grid values {bad} outside [1, d={d}]")
    if len(grid) == 1:
        return (grid[0], np.zeros(1)) if return_scores else grid[0]
    if folds > n:
        raise InvalidArgumentError(f"folds={folds} exceeds n={n}")

    if fit is None:
        if R is None:
            raise InvalidArgumentError("pass a truncation level R or a custom fit")
        fit = _default_fit(data, R)
    scores = cv_scores(data, grid, int(folds), (lo, hi), fit)
    sens = SensitivityBound("Linf", (hi - lo) / (n // folds))
    eps = math.inf if noise_multiplier == 0 else budget.epsilon / noise_multiplier
    idx = exponential_mechanism(scores, sens, eps, seed)
    if ledger is not None:
        ledger.spend("cv_selection", budget)
    return (grid[idx], scores) if return_scores else grid[idx]
