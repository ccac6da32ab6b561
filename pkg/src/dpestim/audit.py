"""Tracing-attack scores and an empirical membership-inference audit.

Every score needs the true parameter, so the audit only makes sense on
simulated data where that parameter is known.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import InvalidArgumentError, RegressionData, SeedLike, derive_seed, make_rng


def _vec(v):
    return np.asarray(v, dtype=np.float64).reshape(-1)


def _same_len(*vs):
    if len({v.size for v in vs}) != 1:
        raise InvalidArgumentError(f"dimension mismatch: {[v.size for v in vs]}")


def _support(support, d):
    idx = np.asarray(list(support) if not isinstance(support, np.ndarray) else support, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= d or np.unique(idx).size != idx.size):
        raise InvalidArgumentError(f"support must hold distinct indices in [0, {d})")
    return idx


def mean_attack(x_row, mu, m_out) -> float:
    """<x - mu, M(X)>."""
    x, mu, m = _vec(x_row), _vec(mu), _vec(m_out)
    _same_len(x, mu, m)
    return float((x - mu) @ m)


def sparse_mean_attack(x_row, mu, support, m_out) -> float:
    """<(x - mu)_S, (M(X) - mu)_S> over the support S of the true mean."""
    x, mu, m = _vec(x_row), _vec(mu), _vec(m_out)
    _same_len(x, mu, m)
    idx = _support(support, x.size)
    return float((x - mu)[idx] @ (m - mu)[idx])


def regression_attack(row, beta, m_out, support=None) -> float:
    """<M - beta, (y - x'beta) x>, optionally restricted to a support."""
    y, x = row
    x, beta, m = _vec(x), _vec(beta), _vec(m_out)
    _same_len(x, beta, m)
    g = (float(y) - x @ beta) * x
    diff = m - beta
    if support is not None:
        idx = _support(support, x.size)
        return float(diff[idx] @ g[idx])
    return float(diff @ g)


# ---------------------------------------------------------------------------
# Data generators with a known truth


@dataclass
class GaussianMeanModel:
    """Rows N(mu, sigma^2 I).

    ``mu_prior`` is ``"uniform"`` (i.i.d. Uniform(-10, 10)) or
    ``"rademacher"`` (i.i.d. +-1); with ``s_star`` only the first ``s_star``
    coordinates are nonzero.
    """

    mu_prior: str = "uniform"
    s_star: Optional[int] = None
    sigma: float = 1.0
    kind: str = field(default="mean", init=False)

    def draw_truth(self, d, rng):
        k = d if self.s_star is None else self.s_star
        if self.mu_prior == "uniform":
            head = rng.uniform(-10.0, 10.0, k)
        elif self.mu_prior == "rademacher":
            head = rng.choice([-1.0, 1.0], size=k)
        else:
            raise InvalidArgumentError(f"unknown mean prior {self.mu_prior!r}")
        mu = np.zeros(d)
        mu[:k] = head
        return mu

    def draw_rows(self, truth, n, rng):
        return truth + self.sigma * rng.standard_normal((n, truth.size))

    def support(self, truth):
        return None if self.s_star is None else np.arange(self.s_star)

    def score(self, rows, truth, est, support):
        if support is None:
            return (rows - truth) @ est
        return (rows - truth)[:, support] @ (est - truth)[support]


@dataclass
class LinearModel:
    """Design Uniform(-1/sqrt(d), 1/sqrt(d)), beta uniform on the unit sphere."""

    s_star: Optional[int] = None
    sigma: float = 1.0
    kind: str = field(default="regression", init=False)

    def draw_truth(self, d, rng):
        k = d if self.s_star is None else self.s_star
        beta = np.zeros(d)
        g = rng.standard_normal(k)
        beta[:k] = g / np.linalg.norm(g)
        return beta

    def draw_rows(self, truth, n, rng):
        d = truth.size
        x = rng.uniform(-1.0 / math.sqrt(d), 1.0 / math.sqrt(d), (n, d))
        y = x @ truth + self.sigma * rng.standard_normal(n)
        return RegressionData(x, y)

    def support(self, truth):
        return None if self.s_star is None else np.arange(self.s_star)

    def score(self, rows, truth, est, support):
        g = (rows.y - rows.x @ truth)[:, None] * rows.x
        diff = est - truth
        if support is not None:
            return g[:, support] @ diff[support]
        return g @ diff


# ---------------------------------------------------------------------------
# Audit driver


@dataclass
class AttackReport:
    scores: np.ndarray
    in_sample: np.ndarray
    rep: np.ndarray
    threshold: float
    config: dict = field(default_factory=dict)

    @property
    def scores_in(self):
        return self.scores[self.in_sample]

    @property
    def scores_out(self):
        return self.scores[~self.in_sample]

    def summary(self) -> dict:
        a, b = self.scores_in, self.scores_out
        se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        se_out = b.std(ddof=1) / math.sqrt(b.size)
        return {
            "n_in": int(a.size),
            "n_out": int(b.size),
            "mean_in": float(a.mean()),
            "mean_out": float(b.mean()),
            "sd_in": float(a.std(ddof=1)),
            "sd_out": float(b.std(ddof=1)),
            "se_out": float(se_out),
            "z": float((a.mean() - b.mean()) / se) if se > 0 else 0.0,
            "threshold": self.threshold,
            "exceed_in": int(np.sum(a > self.threshold)),
            "exceed_out": int(np.sum(b > self.threshold)),
        }

    @property
    def z(self) -> float:
        return self.summary()["z"]

    def per_rep(self) -> list:
        out = []
        for r in np.unique(self.rep):
            m = self.rep == r
            a, b = self.scores[m & self.in_sample], self.scores[m & ~self.in_sample]
            out.append({"rep": int(r), "mean_in": float(a.mean()), "mean_out": float(b.mean())})
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(
            {"config": self.config, "per_rep": self.per_rep(), "aggregate": self.summary()}, **kw
        )


def default_threshold(d: int, sigma: float = 1.0, delta: float = 1e-5) -> float:
    """sigma^2 sqrt(8 d log(1/delta)): out-of-sample scores exceed it w.p. < delta."""
    return sigma**2 * math.sqrt(8.0 * d * math.log(1.0 / delta))


def run_membership_audit(
    generator,
    estimator: Callable,
    n: int,
    d: int,
    reps: int,
    seed: int = 0,
    *,
    n_out: Optional[int] = None,
    threshold: Optional[float] = None,
    jobs: int = 1,
) -> AttackReport:
    """Score in-sample rows against fresh rows for ``reps`` simulated datasets.

    Args:
        generator: a :class:`GaussianMeanModel` or :class:`LinearModel`.
        estimator: ``estimator(data, seed) -> estimate``. Setting an
            attribute ``thread_safe = True`` on it allows ``jobs > 1``.
        n, d: sample size and dimension per dataset.
        reps: number of datasets.
        n_out: fresh rows scored per rep (defaults to ``n``).
    """
    if reps < 1 or n < 1 or d < 1:
        raise InvalidArgumentError("n, d and reps must be positive")
    n_out = n if n_out is None else n_out
    thr = default_threshold(d, getattr(generator, "sigma", 1.0)) if threshold is None else threshold

    def one(r):
        rng = make_rng(derive_seed(seed, r))
        truth = generator.draw_truth(d, rng)
        data = generator.draw_rows(truth, n, rng)
        fresh = generator.draw_rows(truth, n_out, rng)
        try:
            est = np.asarray(estimator(data, derive_seed(seed, r, 1)), dtype=np.float64)
        except Exception as exc:
            raise RuntimeError(f"estimator failed in rep {r}: {exc}") from exc
        sup = generator.support(truth)
        return generator.score(data, truth, est, sup), generator.score(fresh, truth, est, sup)

    if jobs > 1 and getattr(estimator, "thread_safe", False):
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(r) for r in range(reps)]

    scores, labels, rep_ids = [], [], []
    for r, (s_in, s_out) in enumerate(results):
        scores += [s_in, s_out]
        labels += [np.ones(s_in.size, bool), np.zeros(s_out.size, bool)]
        rep_ids += [np.full(s_in.size + s_out.size, r)]
    cfg = {"generator": type(generator).__name__, **{k: v for k, v in asdict(generator).items()},
           "n": n, "d": d, "reps": reps, "seed": seed, "n_out": n_out}
    return AttackReport(
        np.concatenate(scores), np.concatenate(labels), np.concatenate(rep_ids), float(thr), cfg
    )
