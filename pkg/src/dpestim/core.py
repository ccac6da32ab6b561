"""Shared types, randomness, and vector primitives."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class UnsupportedError(ValueError):
    """Raised when a mechanism cannot run with the requested parameters."""


SeedLike = Union[int, np.integer, np.random.Generator, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Return the generator for one top-level randomized call.

    Integer seeds map to a counter-based Philox stream, so identical seeds
    give bit-identical draws on every platform numpy supports. Passing an
    existing ``Generator`` shares its stream (used when one estimator calls
    another).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.Generator(np.random.Philox())
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(*keys: int) -> int:
    """Deterministically derive a 64-bit seed from integer keys."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)
    return int(state[0])


# ---------------------------------------------------------------------------
# Privacy budgets


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if not math.isfinite(float(x)):
        raise InvalidArgumentError(f"budget parameters must be finite, got {x}")
    return Fraction(x)


@dataclass(frozen=True, init=False)
class PrivacyBudget:
    """An (epsilon, delta) pair.

    Values are held as exact rationals so that splitting a budget and adding
    the parts back together reproduces the original bit for bit. The
    ``epsilon`` and ``delta`` attributes are the float views used by the
    noise calibrations.
    """

    eps_exact: Fraction
    delta_exact: Fraction

    def __init__(self, epsilon, delta=0.0):
        eps, dlt = _exact(epsilon), _exact(delta)
        if eps <= 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {float(eps)}")
        if not 0 <= dlt < 1:
            raise InvalidArgumentError(f"delta must lie in [0, 1), got {float(dlt)}")
        object.__setattr__(self, "eps_exact", eps)
        object.__setattr__(self, "delta_exact", dlt)

    @property
    def epsilon(self) -> float:
        return float(self.eps_exact)

    @property
    def delta(self) -> float:
        return float(self.delta_exact)

    def split(self, k: int) -> list["PrivacyBudget"]:
        """Split into ``k`` equal shares (epsilon/k, delta/k)."""
        if int(k) != k or k < 1:
            raise InvalidArgumentError(f"k must be a positive integer, got {k}")
        k = int(k)
        return [PrivacyBudget(self.eps_exact / k, self.delta_exact / k) for _ in range(k)]

    def fraction(self, share) -> tuple["PrivacyBudget", "PrivacyBudget"]:
        """Split into a ``share`` part and the remainder.

        The two parts compose back to this budget exactly.
        """
        share = _exact(share)
        if not 0 < share < 1:
            raise InvalidArgumentError(f"share must lie in (0, 1), got {float(share)}")
        first = PrivacyBudget(self.eps_exact * share, self.delta_exact * share)
        rest = PrivacyBudget(self.eps_exact - first.eps_exact, self.delta_exact - first.delta_exact)
        return first, rest

    def __add__(self, other: "PrivacyBudget") -> "PrivacyBudget":
        return PrivacyBudget(self.eps_exact + other.eps_exact, self.delta_exact + other.delta_exact)

    @staticmethod
    def compose(budgets: Iterable["PrivacyBudget"]) -> "PrivacyBudget":
        """Additive composition of a sequence of budgets."""
        budgets = list(budgets)
        if not budgets:
            raise InvalidArgumentError("cannot compose an empty sequence of budgets")
        eps = sum((b.eps_exact for b in budgets), Fraction(0))
        dlt = sum((b.delta_exact for b in budgets), Fraction(0))
        return PrivacyBudget(eps, dlt)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "epsilon_exact": str(self.eps_exact),
            "delta_exact": str(self.delta_exact),
        }

    def __repr__(self) -> str:
        return f"PrivacyBudget(epsilon={self.epsilon!r}, delta={self.delta!r})"


@dataclass
class BudgetLedger:
    """Records every budget spent by the private releases of a pipeline."""

    entries: list = field(default_factory=list)

    def spend(self, label: str, budget: PrivacyBudget) -> None:
        self.entries.append((label, budget))

    def total(self) -> Optional[PrivacyBudget]:
        if not self.entries:
            return None
        return PrivacyBudget.compose(b for _, b in self.entries)

    def to_dict(self) -> dict:
        total = self.total()
        return {
            "entries": [dict(label=label, **b.to_dict()) for label, b in self.entries],
            "total": None if total is None else total.to_dict(),
        }


# ---------------------------------------------------------------------------
# Noise records


@dataclass
class NoiseDraw:
    """One noise-consuming step: which coordinates were perturbed and by what."""

    kind: str
    distribution: str
    scale: float
    indices: np.ndarray
    values: np.ndarray
    step: int = 0


@dataclass
class NoiseLedger:
    draws: list = field(default_factory=list)

    def record(self, kind, distribution, scale, indices, values, step=0):
        self.draws.append(
            NoiseDraw(kind, distribution, float(scale), np.asarray(indices), np.asarray(values), step)
        )

    def of_kind(self, kind: str) -> list:
        return [d for d in self.draws if d.kind == kind]

    def __len__(self) -> int:
        return len(self.draws)


# ---------------------------------------------------------------------------
# Data containers


def as_data_matrix(x, name: str = "x") -> np.ndarray:
    """Validate an n x d sample and return it as a float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class RegressionData:
    """Design matrix ``x`` (n x d) and responses ``y`` (length n)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_data_matrix(self.x, "x")
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise InvalidArgumentError(
                f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.all(np.isfinite(y)):
            raise InvalidArgumentError("y contains non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def rows(self, idx) -> "RegressionData":
        return RegressionData(self.x[idx], self.y[idx])


def adjacent_datasets(x, row: int, replacement):
    """Return a copy of ``x`` with one row replaced.

    Works for a data matrix or for :class:`RegressionData`, where the
    replacement is a ``(y, x_row)`` pair.
    """
    if isinstance(x, RegressionData):
        if not 0 <= row < x.n:
            raise InvalidArgumentError(f"row {row} out of range for n={x.n}")
        y_new, x_new = replacement
        x_new = np.asarray(x_new, dtype=np.float64).reshape(-1)
        if x_new.shape[0] != x.d:
            raise InvalidArgumentError(f"replacement has length {x_new.shape[0]}, expected {x.d}")
        xs, ys = x.x.copy(), x.y.copy()
        xs[row], ys[row] = x_new, float(y_new)
        return RegressionData(xs, ys)
    arr = as_data_matrix(x)
    n, d = arr.shape
    if not 0 <= row < n:
        raise InvalidArgumentError(f"row {row} out of range for n={n}")
    rep = np.asarray(replacement, dtype=np.float64).reshape(-1)
    if rep.shape[0] != d:
        raise InvalidArgumentError(f"replacement has length {rep.shape[0]}, expected {d}")
    out = arr.copy()
    out[row] = rep
    return out


# ---------------------------------------------------------------------------
# Vector primitives


def clamp_scalar(x: float, R: float) -> float:
    if not math.isfinite(x):
        raise InvalidArgumentError(f"x must be finite, got {x}")
    if not (R > 0):
        raise InvalidArgumentError(f"R must be positive, got {R}")
    return min(max(x, -R), R)


def project_l2_ball(v, C: float) -> np.ndarray:
    """Project ``v`` onto the closed l2 ball of radius ``C``."""
    if not (C > 0):
        raise InvalidArgumentError(f"C must be positive, got {C}")
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm <= C:
        return v.copy()
    return v * (C / norm)


# ---------------------------------------------------------------------------
# CSV interchange


def read_matrix_csv(path) -> np.ndarray:
    """Read a headerless comma-separated matrix, one row per line."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidArgumentError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InvalidArgumentError(f"{path}: ragged rows (widths {sorted(widths)})")
    try:
        arr = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None
    return as_data_matrix(arr)


def read_regression_csv(path) -> RegressionData:
    """Read a CSV whose last column is the response."""
    arr = read_matrix_csv(path)
    if arr.shape[1] < 2:
        raise InvalidArgumentError(f"{path}: need at least one feature column plus the response")
    return RegressionData(arr[:, :-1], arr[:, -1])


def format_float(v: float) -> str:
    return repr(float(v))


def write_matrix_csv(path_or_file, arr: Sequence) -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    lines = "".join(",".join(format_float(v) for v in row) + "\n" for row in arr)
    if hasattr(path_or_file, "write"):
        path_or_file.write(lines)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(lines)


def write_regression_csv(path, data: RegressionData) -> None:
    write_matrix_csv(path, np.column_stack([data.x, data.y]))
