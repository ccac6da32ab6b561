"""Private mean estimation: dense (Gaussian mechanism) and sparse (peeling)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    BudgetLedger,
    InvalidArgumentError,
    PrivacyBudget,
    SeedLike,
    UnsupportedError,
    as_data_matrix,
    make_rng,
)
from .peeling import peel


@dataclass(frozen=True)
class MeanConfig:
    """Settings for one private mean estimate.

    Data are clamped coordinatewise to ``[center - R, center + R]``. The
    center defaults to zero; a data-driven interval ``(lo, hi)`` maps to
    ``center=(lo+hi)/2, R=(hi-lo)/2`` via :meth:`from_interval`. Either way
    one row moves each clamped coordinate mean by at most ``2R/n``.
    """

    R: float
    budget: PrivacyBudget
    s: Optional[int] = None
    seed: SeedLike = 0
    center: float = 0.0
    noise_multiplier: float = 1.0

    def __post_init__(self):
        if not (self.R > 0 and math.isfinite(self.R)):
            raise InvalidArgumentError(f"truncation level R must be positive, got {self.R}")
        if self.s is not None and self.s < 1:
            raise InvalidArgumentError(f"sparsity must be >= 1, got {self.s}")
        if self.noise_multiplier < 0:
            raise InvalidArgumentError("noise_multiplier must be nonnegative")

    @classmethod
    def from_interval(cls, lo: float, hi: float, budget: PrivacyBudget, **kw) -> "MeanConfig":
        if not hi > lo:
            raise InvalidArgumentError(f"truncation interval must have hi > lo, got ({lo}, {hi})")
        return cls(R=(hi - lo) / 2.0, budget=budget, center=(lo + hi) / 2.0, **kw)


def truncated_mean(x, R: float, center: float = 0.0) -> np.ndarray:
    """Column means after clamping every entry to ``[center - R, center + R]``."""
    x = as_data_matrix(x)
    if not R > 0:
        raise InvalidArgumentError(f"R must be positive, got {R}")
    return np.clip(x, center - R, center + R).mean(axis=0)


def mean_noise_variance(n: int, d: int, R: float, budget: PrivacyBudget) -> float:
    """Per-coordinate Gaussian noise variance 4 R^2 d log(1/delta) / (n eps)^2."""
    if budget.delta <= 0:
        raise UnsupportedError("private_mean needs delta > 0")
    return 4.0 * R**2 * d * math.log(1.0 / budget.delta) / (n**2 * budget.epsilon**2)


def private_mean(x, cfg: MeanConfig, ledger: Optional[BudgetLedger] = None) -> np.ndarray:
    """Clamped sample mean plus isotropic Gaussian noise."""
    if cfg.s is not None:
        raise InvalidArgumentError("MeanConfig.s is set; use private_sparse_mean")
    x = as_data_matrix(x)
    n, d = x.shape
    var = mean_noise_variance(n, d, cfg.R, cfg.budget)
    rng = make_rng(cfg.seed)
    est = truncated_mean(x, cfg.R, cfg.center)
    noise = rng.standard_normal(d) * (math.sqrt(var) * cfg.noise_multiplier)
    if ledger is not None:
        ledger.spend("gaussian_mean", cfg.budget)
    return est + noise


def private_sparse_mean(x, cfg: MeanConfig, ledger: Optional[BudgetLedger] = None) -> np.ndarray:
    """Clamped sample mean passed through peeling with sensitivity 2R/n."""
    if cfg.s is None:
        raise InvalidArgumentError("private_sparse_mean needs MeanConfig.s")
    x = as_data_matrix(x)
    n, d = x.shape
    if cfg.s > d:
        raise InvalidArgumentError(f"sparsity s={cfg.s} exceeds dimension d={d}")
    # Peeling thresholds around zero, so a shifted clamp window must be
    # re-centered before selection.
    if cfg.center != 0.0:
        raise InvalidArgumentError("sparse mean estimation requires a zero-centered truncation")
    xbar = truncated_mean(x, cfg.R)
    lam = 2.0 * cfg.R / n * cfg.noise_multiplier
    res = peel(xbar, cfg.s, cfg.budget, lam, make_rng(cfg.seed))
    if ledger is not None:
        ledger.spend("peeling", cfg.budget)
    return res.output
