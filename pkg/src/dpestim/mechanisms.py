"""Noise primitives and sensitivity bounds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, PrivacyBudget, SeedLike, UnsupportedError, make_rng


class PrivacyWarning(UserWarning):
    """A calibration is being used outside the regime where it is proven."""


@dataclass(frozen=True)
class SensitivityBound:
    order: str
    value: float

    def __post_init__(self):
        if self.order not in ("L1", "L2", "Linf"):
            raise InvalidArgumentError(f"unknown norm order {self.order!r}")
        if not (math.isfinite(self.value) and self.value >= 0):
            raise InvalidArgumentError(f"sensitivity must be finite and nonnegative, got {self.value}")


_TWO53 = float(2**53)


def _uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    # Uniform on the open interval (0, 1): midpoints of a 2**53 grid.
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / _TWO53


def laplace_vector(d: int, scale: float, seed: SeedLike) -> np.ndarray:
    """Draw ``d`` i.i.d. Laplace(0, scale) variates by inverting the CDF.

    Each variate consumes exactly one 53-bit uniform from the stream, so the
    draw sequence is stable across numpy versions.
    """
    if not (scale > 0 and math.isfinite(scale)):
        raise InvalidArgumentError(f"Laplace scale must be positive, got {scale}")
    rng = make_rng(seed)
    u = _uniform_open(rng, int(d)) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def gaussian_sigma2(delta2: SensitivityBound, budget: PrivacyBudget) -> float:
    """Per-coordinate variance of the classical Gaussian mechanism.

    Returns ``2 (Delta_2 / eps)^2 log(1.25 / delta)``. The calibration is only
    proven for ``eps <= 1``; larger values still evaluate but emit a
    :class:`PrivacyWarning`.
    """
    if delta2.order != "L2":
        raise InvalidArgumentError("the Gaussian mechanism is calibrated by L2 sensitivity")
    if budget.delta <= 0:
        raise UnsupportedError("the Gaussian mechanism needs delta > 0")
    if not delta2.value > 0:
        raise InvalidArgumentError("sensitivity must be positive")
    if budget.epsilon > 1:
        warnings.warn(
            f"Gaussian mechanism calibration used with epsilon={budget.epsilon} > 1",
            PrivacyWarning,
            stacklevel=2,
        )
    return 2.0 * (delta2.value / budget.epsilon) ** 2 * math.log(1.25 / budget.delta)


def peeling_scale(lam: float, s: int, budget: PrivacyBudget) -> float:
    """Laplace scale used by every draw inside one peeling call."""
    if s < 1:
        raise InvalidArgumentError(f"sparsity must be >= 1, got {s}")
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be nonnegative, got {lam}")
    if not 0 < budget.delta < 1:
        raise InvalidArgumentError("peeling needs 0 < delta < 1")
    return lam * 2.0 * math.sqrt(3.0 * s * math.log(1.0 / budget.delta)) / budget.epsilon


def exponential_mechanism(scores, sensitivity: SensitivityBound, epsilon: float, seed: SeedLike) -> int:
    """Pick an index with probability proportional to exp(-eps * score / (2 sens)).

    Scores are losses: lower is better. ``epsilon=inf`` or a zero
    sensitivity returns the argmin (lowest index on ties).
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise InvalidArgumentError("exponential mechanism needs at least one candidate")
    if not np.all(np.isfinite(scores)):
        raise InvalidArgumentError("scores must be finite")
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    rng = make_rng(seed)
    if math.isinf(epsilon) or sensitivity.value == 0:
        return int(np.argmin(scores))
    logits = -epsilon * scores / (2.0 * sensitivity.value)
    logits -= logits.max()
    p = np.exp(logits)
    cdf = np.cumsum(p / p.sum())
    u = rng.random()
    return int(min(np.searchsorted(cdf, u, side="right"), scores.size - 1))


def truncated_mean_sensitivity(n: int, d: int, R: float, order: str = "L2") -> SensitivityBound:
    """Sensitivity of the coordinatewise-clamped sample mean.

    Replacing one row moves each coordinate by at most ``2R/n``, hence the
    L2 bound ``2R sqrt(d)/n`` and the Linf bound ``2R/n``.
    """
    if n < 1 or d < 1:
        raise InvalidArgumentError("n and d must be positive")
    if not R > 0:
        raise InvalidArgumentError(f"R must be positive, got {R}")
    per_coord = 2.0 * R / n
    if order == "L2":
        return SensitivityBound("L2", per_coord * math.sqrt(d))
    if order == "Linf":
        return SensitivityBound("Linf", per_coord)
    if order == "L1":
        return SensitivityBound("L1", per_coord * d)
    raise InvalidArgumentError(f"unknown norm order {order!r}")
