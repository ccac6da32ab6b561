import math

import numpy as np
import pytest

from dpestim.core import BudgetLedger, InvalidArgumentError, PrivacyBudget, UnsupportedError
from dpestim.mean import (
    MeanConfig,
    mean_noise_variance,
    private_mean,
    private_sparse_mean,
    truncated_mean,
)
from dpestim.peeling import hard_threshold
from dpestim.sim import ExperimentSpec, run_experiment


def test_truncated_mean_examples():
    np.testing.assert_array_equal(truncated_mean([[1.0], [3.0]], 2.0), [1.5])
    np.testing.assert_array_equal(truncated_mean([[-5.0, 5.0]], 1.0), [-1.0, 1.0])
    x = np.random.default_rng(0).normal(size=(30, 4))
    np.testing.assert_allclose(truncated_mean(x, np.abs(x).max()), x.mean(axis=0), rtol=0, atol=0)


def test_truncated_mean_centered_window():
    x = np.array([[9.0], [13.0]])
    np.testing.assert_array_equal(truncated_mean(x, 1.0, center=10.0), [10.0])


def test_noise_variance_formula():
    v = mean_noise_variance(100, 2, 1.0, PrivacyBudget(1.0, 0.01))
    assert v == pytest.approx(8 * math.log(100) / 1e4, rel=1e-14)
    assert v == pytest.approx(3.68414e-3, abs=1e-8)
    with pytest.raises(UnsupportedError):
        mean_noise_variance(100, 2, 1.0, PrivacyBudget(1.0, 0.0))


def test_zero_noise_equals_truncated_mean():
    x = np.random.default_rng(1).normal(size=(50, 6)) * 3
    cfg = MeanConfig(R=2.0, budget=PrivacyBudget(0.5, 1e-5), noise_multiplier=0.0)
    np.testing.assert_array_equal(private_mean(x, cfg), truncated_mean(x, 2.0))


def test_noise_scale_and_error_decomposition():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(100, 2))
    budget = PrivacyBudget(1.0, 0.01)
    base = truncated_mean(x, 1.0)
    draws = np.array([private_mean(x, MeanConfig(1.0, budget, seed=s)) for s in range(10_000)]) - base
    sd = math.sqrt(mean_noise_variance(100, 2, 1.0, budget))
    np.testing.assert_allclose(draws.std(axis=0), sd, rtol=0.03)
    sq = np.sum(draws**2, axis=1).mean()
    assert sq == pytest.approx(2 * sd**2, rel=0.05)


def test_ledger_and_determinism():
    x = np.random.default_rng(3).normal(size=(40, 3))
    cfg = MeanConfig(1.5, PrivacyBudget(0.5, 1e-4), seed=9)
    led = BudgetLedger()
    a = private_mean(x, cfg, ledger=led)
    np.testing.assert_array_equal(a, private_mean(x, cfg))
    assert led.total().eps_exact == cfg.budget.eps_exact


def test_config_validation():
    b = PrivacyBudget(0.5, 1e-4)
    with pytest.raises(InvalidArgumentError):
        MeanConfig(0.0, b)
    with pytest.raises(InvalidArgumentError):
        MeanConfig(1.0, b, s=0)
    with pytest.raises(InvalidArgumentError):
        MeanConfig.from_interval(1.0, 1.0, b)
    cfg = MeanConfig.from_interval(-1.0, 3.0, b)
    assert (cfg.center, cfg.R) == (1.0, 2.0)
    with pytest.raises(InvalidArgumentError):
        private_mean(np.zeros((3, 2)), MeanConfig(1.0, b, s=1))


def test_sparse_mean_support_and_degeneration():
    rng = np.random.default_rng(4)
    mu = np.zeros(50)
    mu[:5] = [8.0, -7.0, 6.0, -5.0, 4.0]
    x = mu + rng.normal(size=(400, 50))
    b = PrivacyBudget(0.5, 1e-4)
    exact = private_sparse_mean(x, MeanConfig(10.0, b, s=5, noise_multiplier=0.0))
    np.testing.assert_array_equal(exact, hard_threshold(truncated_mean(x, 10.0), 5))
    assert set(np.flatnonzero(exact)) == set(range(5))
    for seed in range(20):
        est = private_sparse_mean(x, MeanConfig(10.0, b, s=7, seed=seed))
        assert np.count_nonzero(est) == 7


def test_sparse_mean_validation():
    b = PrivacyBudget(0.5, 1e-4)
    with pytest.raises(InvalidArgumentError):
        private_sparse_mean(np.zeros((3, 2)), MeanConfig(1.0, b, s=3))
    with pytest.raises(InvalidArgumentError):
        private_sparse_mean(np.zeros((3, 2)), MeanConfig(1.0, b, s=1, center=0.5))
    with pytest.raises(InvalidArgumentError):
        private_sparse_mean(np.zeros((3, 2)), MeanConfig(1.0, b))


def test_rate_scaling_of_noise():
    # error^2 from noise is d * var, and var scales as R^2 d log(1/delta) / (n eps)^2
    b = PrivacyBudget(0.5, 1e-5)
    v1 = mean_noise_variance(1000, 10, 2.0, b)
    assert mean_noise_variance(2000, 10, 2.0, b) == pytest.approx(v1 / 4)
    assert mean_noise_variance(1000, 20, 2.0, b) == pytest.approx(v1 * 2)
    assert mean_noise_variance(1000, 10, 4.0, b) == pytest.approx(v1 * 4)


@pytest.mark.xfail(
    strict=True,
    reason="pooled 2.5%/97.5% quantiles clamp coordinates whose mean lies near +-10; "
    "the zero-noise error alone is about 0.36 at this size",
)
def test_data_driven_mean_error_at_large_n():
    spec = ExperimentSpec(
        problem="mean", n_grid=[100_000], d=20, reps=100, seed=3, truncation="data"
    )
    agg = run_experiment(spec, jobs=4).aggregates()[0]
    assert agg["mean_private"] < 0.25
