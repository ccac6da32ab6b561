"""Private top-s selection by iterative noisy argmax ("peeling")."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import InvalidArgumentError, NoiseLedger, PrivacyBudget, SeedLike, make_rng
from .mechanisms import laplace_vector, peeling_scale


@dataclass
class PeelingResult:
    selected: np.ndarray
    output: np.ndarray
    scale: float
    ledger: Optional[NoiseLedger] = None


def _draw(rng, size, scale):
    if scale == 0:
        return np.zeros(size)
    return laplace_vector(size, scale, rng)


def peel(
    v,
    s: int,
    budget: PrivacyBudget,
    lam: float,
    seed: SeedLike,
    *,
    keep_ledger: bool = False,
) -> PeelingResult:
    """Select ``s`` coordinates of ``v`` privately and release them with noise.

    Each of the ``s`` rounds perturbs every still-unselected coordinate's
    magnitude with Laplace noise and appends the argmax. The selected
    entries are then released with fresh Laplace noise of the same scale.
    The whole call is (eps, delta)-DP for ``budget`` whenever ``v`` has Linf
    sensitivity at most ``lam``.

    Noise is drawn round by round, and within a round only for unselected
    coordinates in increasing index order. Ties go to the lowest index.

    Args:
        v: vector to select from.
        s: number of coordinates to keep, ``1 <= s <= len(v)``.
        budget: privacy budget consumed by this call.
        lam: Linf sensitivity of ``v``. ``0`` gives exact top-s selection.
        seed: integer seed or a generator to draw from.
        keep_ledger: record every noise vector, for accuracy checks.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    d = v.size
    if not 1 <= s <= d:
        raise InvalidArgumentError(f"sparsity s={s} must satisfy 1 <= s <= d={d}")
    rng = make_rng(seed)
    scale = peeling_scale(lam, s, budget)
    ledger = NoiseLedger() if keep_ledger else None

    absv = np.abs(v)
    available = np.ones(d, dtype=bool)
    selected = np.empty(s, dtype=np.int64)
    for i in range(s):
        idx = np.flatnonzero(available)
        w = _draw(rng, idx.size, scale)
        j = idx[int(np.argmax(absv[idx] + w))]
        selected[i] = j
        available[j] = False
        if ledger is not None:
            ledger.record("selection", "laplace", scale, idx, w, step=i)

    w_out = _draw(rng, s, scale)
    out = np.zeros(d)
    out[selected] = v[selected] + w_out
    if ledger is not None:
        ledger.record("output", "laplace", scale, selected.copy(), w_out, step=s)
    return PeelingResult(selected, out, scale, ledger)


def _bound_holds(sel_sq, unsel_sq, c, noise_term) -> bool:
    lhs = float(np.sum(unsel_sq))
    rhs = (1.0 + c) * float(np.sum(sel_sq)) + noise_term
    # Relative slack only absorbs rounding in the two sums.
    return lhs <= rhs * (1.0 + 1e-12) + 1e-300


def verify_peeling_accuracy(
    v, result: PeelingResult, c: float = 1.0, n_random: int = 32, seed: SeedLike = 0
) -> bool:
    """Check the peeling accuracy inequality against a recorded run.

    For equal-size ``R1`` inside the selected set and ``R2`` outside it,
    ``||v_R2||^2 <= (1 + c) ||v_R1||^2 + 4 (1 + 1/c) sum_i ||w_i||_inf^2``.
    For each size the worst pair (smallest selected magnitudes against the
    largest unselected ones) is checked, plus ``n_random`` random pairs.
    """
    if result.ledger is None:
        raise InvalidArgumentError("peeling result has no noise ledger; rerun with keep_ledger=True")
    if not c > 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    d = v.size
    sel = np.asarray(result.selected)
    mask = np.zeros(d, dtype=bool)
    mask[sel] = True
    unsel = np.flatnonzero(~mask)

    rounds = result.ledger.of_kind("selection")
    noise_term = 4.0 * (1.0 + 1.0 / c) * sum(
        float(np.max(np.abs(r.values))) ** 2 if r.values.size else 0.0 for r in rounds
    )

    sel_sq = np.sort(v[sel] ** 2)
    unsel_sq = np.sort(v[unsel] ** 2)[::-1]
    for m in range(1, min(sel.size, unsel.size) + 1):
        if not _bound_holds(sel_sq[:m], unsel_sq[:m], c, noise_term):
            return False

    rng = make_rng(seed)
    for _ in range(n_random if unsel.size else 0):
        m = int(rng.integers(1, min(sel.size, unsel.size) + 1))
        r1 = rng.choice(sel, size=m, replace=False)
        r2 = rng.choice(unsel, size=m, replace=False)
        if not _bound_holds(v[r1] ** 2, v[r2] ** 2, c, noise_term):
            return False
    return True


def exact_top_s(v, s: int) -> np.ndarray:
    """Indices of the ``s`` largest |v_j|, largest first, lowest index on ties."""
    v = np.asarray(v, dtype=np.float64)
    order = np.lexsort((np.arange(v.size), -np.abs(v)))
    return order[:s]


def hard_threshold(v, s: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros_like(v)
    keep = exact_top_s(v, s)
    out[keep] = v[keep]
    return out


__all__ = [
    "PeelingResult",
    "peel",
    "verify_peeling_accuracy",
    "exact_top_s",
    "hard_threshold",
]
