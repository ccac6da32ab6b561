"""Private linear regression by noisy gradient descent and noisy IHT."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    BudgetLedger,
    InvalidArgumentError,
    NoiseLedger,
    PrivacyBudget,
    RegressionData,
    SeedLike,
    UnsupportedError,
    make_rng,
    project_l2_ball,
)
from .mechanisms import PrivacyWarning
from .peeling import peel


@dataclass(frozen=True)
class RegressionConfig:
    """Hyperparameters shared by both regression algorithms.

    ``B`` scales the gradient sensitivity: one row moves the step
    ``eta0 * gradient`` by at most ``eta0 * B / n`` (in L2 for the dense
    algorithm, in Linf for the sparse one). ``c0``, when given, is the
    assumed bound on the true coefficient norm; ``C`` is capped at it.
    """

    eta0: float
    T: int
    R: float
    C: float
    B: float
    budget: PrivacyBudget
    s: Optional[int] = None
    beta0: Optional[np.ndarray] = None
    seed: SeedLike = 0
    c0: Optional[float] = None
    noise_multiplier: float = 1.0

    def __post_init__(self):
        for name in ("eta0", "R", "C", "B"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise InvalidArgumentError(f"{name} must be positive and finite, got {val}")
        if int(self.T) != self.T or self.T < 1:
            raise InvalidArgumentError(f"T must be a positive integer, got {self.T}")
        if self.s is not None and self.s < 1:
            raise InvalidArgumentError(f"sparsity must be >= 1, got {self.s}")
        if self.noise_multiplier < 0:
            raise InvalidArgumentError("noise_multiplier must be nonnegative")
        if self.c0 is not None and self.C > self.c0:
            warnings.warn(
                f"feasibility radius C={self.C} exceeds c0={self.c0}; using C=c0",
                PrivacyWarning,
                stacklevel=3,
            )
            object.__setattr__(self, "C", float(self.c0))


@dataclass
class TraceRecord:
    betas: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    noise: NoiseLedger = field(default_factory=NoiseLedger)


def _check_beta(data: RegressionData, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != data.d:
        raise InvalidArgumentError(f"beta has length {beta.shape[0]}, expected d={data.d}")
    return beta


def least_squares_loss(data: RegressionData, beta) -> float:
    """Mean squared residual (1/n) sum (y_i - x_i' beta)^2."""
    beta = _check_beta(data, beta)
    r = data.y - data.x @ beta
    return float(r @ r) / data.n


def truncated_half_gradient(data: RegressionData, beta, R: float) -> np.ndarray:
    """(1/n) sum (x_i' beta - clamp(y_i, R)) x_i.

    Equals half the gradient of :func:`least_squares_loss` when no response
    is clamped.
    """
    beta = _check_beta(data, beta)
    if not R > 0:
        raise InvalidArgumentError(f"R must be positive, got {R}")
    resid = data.x @ beta - np.clip(data.y, -R, R)
    return data.x.T @ resid / data.n


def gd_noise_variance(n: int, cfg: RegressionConfig) -> float:
    """Per-coordinate variance of each noisy gradient step."""
    eps_t = cfg.budget.epsilon / cfg.T
    return cfg.eta0**2 * 2.0 * cfg.B**2 * math.log(2.0 * cfg.T / cfg.budget.delta) / (n**2 * eps_t**2)


def _start(data: RegressionData, cfg: RegressionConfig) -> np.ndarray:
    if cfg.beta0 is None:
        return np.zeros(data.d)
    return _check_beta(data, cfg.beta0).copy()


def private_linear_regression(
    data: RegressionData,
    cfg: RegressionConfig,
    *,
    record_trace: bool = False,
    ledger: Optional[BudgetLedger] = None,
):
    """Noisy projected gradient descent on the least-squares loss.

    Runs ``T`` iterations of ``beta <- P_C(beta - eta0 * g(beta) + w)`` with
    ``g`` the truncated half-gradient and ``w`` Gaussian noise. Each
    iteration spends ``budget / T``.

    Returns:
        ``(beta_T, trace)``; ``trace`` is ``None`` unless ``record_trace``.
    """
    if cfg.s is not None:
        raise InvalidArgumentError("RegressionConfig.s is set; use private_sparse_regression")
    if cfg.budget.delta <= 0:
        raise UnsupportedError("private_linear_regression needs delta > 0")
    n, d = data.n, data.d
    rng = make_rng(cfg.seed)
    sd = math.sqrt(gd_noise_variance(n, cfg)) * cfg.noise_multiplier
    shares = cfg.budget.split(cfg.T)

    beta = _start(data, cfg)
    trace = TraceRecord() if record_trace else None
    if trace is not None:
        trace.betas.append(beta.copy())
        trace.losses.append(least_squares_loss(data, beta))
    for t in range(cfg.T):
        w = rng.standard_normal(d) * sd
        step = beta - cfg.eta0 * truncated_half_gradient(data, beta, cfg.R) + w
        beta = project_l2_ball(step, cfg.C)
        if ledger is not None:
            ledger.spend(f"gd_step_{t}", shares[t])
        if trace is not None:
            trace.noise.record("gradient", "gaussian", sd, np.arange(d), w, step=t)
            trace.betas.append(beta.copy())
            trace.losses.append(least_squares_loss(data, beta))
    return beta, trace


def private_sparse_regression(
    data: RegressionData,
    cfg: RegressionConfig,
    *,
    record_trace: bool = False,
    ledger: Optional[BudgetLedger] = None,
):
    """Noisy iterative hard thresholding.

    Each iteration takes a truncated gradient step, replaces exact hard
    thresholding by :func:`~dpestim.peeling.peel` at budget ``budget / T``
    with sensitivity ``eta0 * B / n``, and projects onto the l2 ball of
    radius ``C``. The output has at most ``s`` nonzeros.
    """
    if cfg.s is None:
        raise InvalidArgumentError("private_sparse_regression needs RegressionConfig.s")
    n, d = data.n, data.d
    if cfg.s > d:
        raise InvalidArgumentError(f"sparsity s={cfg.s} exceeds dimension d={d}")
    rng = make_rng(cfg.seed)
    lam = cfg.eta0 * cfg.B / n * cfg.noise_multiplier
    shares = cfg.budget.split(cfg.T)

    beta = _start(data, cfg)
    trace = TraceRecord() if record_trace else None
    if trace is not None:
        trace.betas.append(beta.copy())
        trace.losses.append(least_squares_loss(data, beta))
    for t in range(cfg.T):
        half = beta - cfg.eta0 * truncated_half_gradient(data, beta, cfg.R)
        res = peel(half, cfg.s, shares[t], lam, rng, keep_ledger=trace is not None)
        beta = project_l2_ball(res.output, cfg.C)
        if ledger is not None:
            ledger.spend(f"peeling_step_{t}", shares[t])
        if trace is not None:
            for draw in res.ledger.draws:
                draw.step = t
                trace.noise.draws.append(draw)
            trace.betas.append(beta.copy())
            trace.losses.append(least_squares_loss(data, beta))
    return beta, trace


# ---------------------------------------------------------------------------
# Parameter choices from the convergence theory. L, c0, cx, rho are unspecified
# absolute constants there; they are knobs here.


def low_dim_theory_config(
    n: int,
    d: int,
    budget: PrivacyBudget,
    *,
    sigma: float = 1.0,
    L: float = 1.0,
    c0: float = 1.0,
    cx: float = 1.0,
    R: Optional[float] = None,
    seed: SeedLike = 0,
    **overrides,
) -> RegressionConfig:
    """eta0 = d/2L, R = sigma sqrt(2 log n), B = 4(R + c0 cx) cx, C = c0,
    T = ceil(8 L^2 log(c0^2 n)), beta0 = 0.

    B is always derived from the R in use, so passing ``R`` keeps the
    privacy condition on B satisfied.
    """
    if R is None:
        R = sigma * math.sqrt(2.0 * math.log(n))
    cfg = RegressionConfig(
        eta0=d / (2.0 * L),
        T=max(1, math.ceil(8.0 * L**2 * math.log(c0**2 * n))),
        R=R,
        C=c0,
        B=4.0 * (R + c0 * cx) * cx,
        budget=budget,
        seed=seed,
        c0=c0,
    )
    return replace(cfg, **overrides) if overrides else cfg


def sparse_theory_config(
    n: int,
    s_star: int,
    budget: PrivacyBudget,
    *,
    sigma: float = 1.0,
    L: float = 1.0,
    c0: float = 1.0,
    cx: float = 1.0,
    rho: float = 2.0,
    R: Optional[float] = None,
    seed: SeedLike = 0,
    **overrides,
) -> RegressionConfig:
    """s = rho L^4 s*, eta0 = s/6L, R = sigma sqrt(2 log n), C = c0,
    B = 4(R + c0 cx) cx / sqrt(s), T = ceil(rho L^2 log(8 c0^2 L n))."""
    s = max(1, int(round(rho * L**4 * s_star)))
    if R is None:
        R = sigma * math.sqrt(2.0 * math.log(n))
    cfg = RegressionConfig(
        eta0=s / (6.0 * L),
        T=max(1, math.ceil(rho * L**2 * math.log(8.0 * c0**2 * L * n))),
        R=R,
        C=c0,
        B=4.0 * (R + c0 * cx) * cx / math.sqrt(s),
        budget=budget,
        s=s,
        seed=seed,
        c0=c0,
    )
    return replace(cfg, **overrides) if overrides else cfg
