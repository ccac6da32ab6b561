import json

import numpy as np
import pytest

from dpestim.audit import (
    GaussianMeanModel,
    LinearModel,
    default_threshold,
    mean_attack,
    regression_attack,
    run_membership_audit,
    sparse_mean_attack,
)
from dpestim.core import InvalidArgumentError, PrivacyBudget
from dpestim.mean import MeanConfig, private_mean


def test_mean_attack_examples():
    assert mean_attack([1.0, 2.0], [1.0, 2.0], [5.0, -3.0]) == 0.0
    assert mean_attack([1.0, 0.0], [0.0, 0.0], [3.0, 7.0]) == 3.0
    assert mean_attack([0.0, 1.0], [0.0, 0.0], [4.0, 0.0]) == 0.0


def test_sparse_mean_attack_examples():
    mu = np.array([1.0, -1.0, 0.0])
    assert sparse_mean_attack([2.0, 2.0, 2.0], mu, [0, 1], mu) == 0.0
    assert sparse_mean_attack([2.0, 2.0, 2.0], mu, [], [9.0, 9.0, 9.0]) == 0.0
    x, m = np.array([0.5, -2.0, 3.0]), np.array([1.0, 2.0, -1.0])
    assert sparse_mean_attack(x, np.zeros(3), range(3), m) == pytest.approx(mean_attack(x, np.zeros(3), m))
    with pytest.raises(InvalidArgumentError):
        sparse_mean_attack(x, mu, [0, 3], m)


def test_regression_attack_examples():
    beta = np.array([1.0, 2.0])
    x = np.array([0.5, -1.0])
    assert regression_attack((x @ beta, x), beta, [7.0, 7.0]) == 0.0
    assert regression_attack((4.0, x), beta, beta) == 0.0
    assert regression_attack((2.0, [1.0]), [1.0], [3.0]) == 2.0


def test_attacks_are_bilinear():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, mu, m = rng.normal(size=(3, 6))
        c = float(rng.normal())
        assert mean_attack(x, mu, c * m) == pytest.approx(c * mean_attack(x, mu, m), rel=1e-12, abs=1e-12)
        sup = [0, 2, 5]
        a = sparse_mean_attack(x, mu, sup, mu + c * (m - mu))
        assert a == pytest.approx(c * sparse_mean_attack(x, mu, sup, m), rel=1e-10, abs=1e-10)
        beta = rng.normal(size=6)
        a = regression_attack((1.3, x), beta, beta + c * (m - beta))
        assert a == pytest.approx(c * regression_attack((1.3, x), beta, m), rel=1e-10, abs=1e-10)


def test_threshold_formula():
    assert default_threshold(100, 1.0, 1e-5) == pytest.approx(np.sqrt(800 * np.log(1e5)))
    assert default_threshold(100, 2.0, 1e-5) == pytest.approx(4 * default_threshold(100, 1.0, 1e-5))


def _sample_mean(data, seed):
    return data.mean(axis=0)


_sample_mean.thread_safe = True


def test_sample_mean_is_traced():
    rep = run_membership_audit(GaussianMeanModel(mu_prior="rademacher"), _sample_mean, 50, 5000, 100, seed=1)
    s = rep.summary()
    assert s["z"] > 10
    # E<x_i - mu, mean> = d / n = 100 for rows in the sample
    assert s["mean_in"] == pytest.approx(100.0, rel=0.05)
    assert abs(s["mean_out"]) < 4 * s["se_out"]


def test_constant_estimator_shows_no_signal():
    rep = run_membership_audit(GaussianMeanModel(), lambda data, seed: np.ones(data.shape[1]), 50, 200, 100, seed=2)
    s = rep.summary()
    assert abs(s["z"]) < 3
    assert abs(s["mean_out"]) < 4 * s["se_out"]


def test_privacy_weakens_the_attack():
    model = GaussianMeanModel(mu_prior="rademacher")
    budget = PrivacyBudget(0.1, 1e-5)

    def dp(data, seed):
        return private_mean(data, MeanConfig(R=4.0, budget=budget, seed=seed))

    base = run_membership_audit(model, _sample_mean, 50, 1000, 50, seed=3)
    priv = run_membership_audit(model, dp, 50, 1000, 50, seed=3)
    assert priv.z < base.z / 5
    assert abs(priv.summary()["mean_out"]) < 4 * priv.summary()["se_out"]


def test_sparse_and_regression_generators():
    rep = run_membership_audit(
        GaussianMeanModel(s_star=5), lambda data, seed: data.mean(axis=0), 40, 300, 20, seed=4
    )
    assert abs(rep.summary()["mean_out"]) < 4 * rep.summary()["se_out"]

    def ols(data, seed):
        return np.linalg.lstsq(data.x, data.y, rcond=None)[0]

    rep = run_membership_audit(LinearModel(), ols, 60, 40, 30, seed=5)
    s = rep.summary()
    assert s["z"] > 3
    assert abs(s["mean_out"]) < 4 * s["se_out"]


def test_report_json_and_jobs_determinism():
    model = GaussianMeanModel()
    a = run_membership_audit(model, _sample_mean, 20, 30, 6, seed=7, jobs=3)
    b = run_membership_audit(model, _sample_mean, 20, 30, 6, seed=7, jobs=1)
    np.testing.assert_array_equal(a.scores, b.scores)
    doc = json.loads(a.to_json())
    assert set(doc) == {"config", "per_rep", "aggregate"}
    assert len(doc["per_rep"]) == 6
    assert doc["config"]["n"] == 20


def test_estimator_failure_names_the_rep():
    def boom(data, seed):
        raise ValueError("bad")

    with pytest.raises(RuntimeError, match="rep 0"):
        run_membership_audit(GaussianMeanModel(), boom, 5, 3, 2)
