import math

import numpy as np
import pytest

from gpruq.gpr import KernelParams, fit
from gpruq.uncertainty import (ESTIMATORS, BootstrapEstimator, GPREstimator,
                               PredictiveDistribution, TwoSetEstimator, build_estimator, refit)

PARAMS = KernelParams(1.0, [1.0, 1.5])
NOISE = 1e-3


@pytest.fixture
def data():
    rng = np.random.default_rng(42)
    x = rng.uniform(-3, 3, size=(40, 2))
    y = np.sin(x[:, 0]) * np.cos(x[:, 1]) + 0.03 * rng.normal(size=40)
    xq = rng.uniform(-3, 3, size=(25, 2))
    return x, y, xq


def test_predictive_distribution_validation():
    with pytest.raises(ValueError):
        PredictiveDistribution([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        PredictiveDistribution([0.0], [-1.0])
    with pytest.raises(ValueError):
        PredictiveDistribution([np.nan], [1.0])
    d = PredictiveDistribution(1.5, 0.2)
    assert len(d) == 1


def test_gpr_estimator_matches_model(data):
    x, y, xq = data
    est = GPREstimator.fit(x, y, PARAMS, NOISE)
    m = fit(x, y, PARAMS, NOISE)
    d = est.predict(xq)
    np.testing.assert_array_equal(d.mean, m.predict_mean(xq))
    np.testing.assert_array_equal(d.std, m.predict_std(xq))


def test_two_set_member_difference_oracle(data):
    x, y, xq = data
    est = TwoSetEstimator.fit(x, y, PARAMS, NOISE, seed=3)
    assert len(est.index_a) == 20 and len(est.index_b) == 20
    assert set(est.index_a).isdisjoint(est.index_b)
    assert sorted(np.concatenate([est.index_a, est.index_b])) == list(range(40))
    ma = fit(x[est.index_a], y[est.index_a], PARAMS, NOISE)
    mb = fit(x[est.index_b], y[est.index_b], PARAMS, NOISE)
    expected = np.abs(ma.predict_mean(xq) - mb.predict_mean(xq))
    np.testing.assert_array_equal(est.predict(xq).std, expected)


def test_two_set_odd_split():
    rng = np.random.default_rng(42)
    x = rng.normal(size=(7, 2))
    est = TwoSetEstimator.fit(x, rng.normal(size=7), PARAMS, NOISE)
    assert {len(est.index_a), len(est.index_b)} == {3, 4}
    with pytest.raises(ValueError):
        TwoSetEstimator.fit(x[:1], [0.0], PARAMS, NOISE)


def test_bootstrap_direct_summation_oracle(data):
    x, y, xq = data
    est = BootstrapEstimator.fit(x, y, PARAMS, NOISE, seed=5, n_members=10)
    preds = [fit(x[idx], y[idx], PARAMS, NOISE).predict_mean(xq) for idx in est.resamples]
    n = len(preds)
    mean = [sum(p[q] for p in preds) / n for q in range(len(xq))]
    expected = [math.sqrt(sum((p[q] - mean[q]) ** 2 for p in preds) / (n - 1))
                for q in range(len(xq))]
    np.testing.assert_allclose(est.predict(xq).std, expected, rtol=1e-12)


def test_bootstrap_two_members(data):
    x, y, xq = data
    est = BootstrapEstimator.fit(x, y, PARAMS, NOISE, seed=1, n_members=2)
    a, b = (m.predict_mean(xq) for m in est.members)
    np.testing.assert_allclose(est.predict(xq).std, np.abs(a - b) / math.sqrt(2), rtol=1e-12)


def test_bootstrap_resamples_with_replacement(data):
    x, y, _ = data
    est = BootstrapEstimator.fit(x, y, PARAMS, NOISE, seed=0, n_members=10)
    assert all(len(r) == 40 for r in est.resamples)
    assert any(len(np.unique(r)) < 40 for r in est.resamples)


def test_bootstrap_zero_noise_drops_duplicates(data):
    x, y, _ = data
    est = BootstrapEstimator.fit(x, y, PARAMS, 0.0, seed=0, n_members=3)
    for r in est.resamples:
        assert len(np.unique(r)) == len(r)


def test_bootstrap_needs_two_members(data):
    x, y, _ = data
    with pytest.raises(ValueError):
        BootstrapEstimator.fit(x, y, PARAMS, NOISE, n_members=1)


def test_identical_means(data):
    x, y, xq = data
    means = [build_estimator(k, x, y, PARAMS, NOISE, seed=7).predict(xq).mean
             for k in ESTIMATORS]
    for m in means[1:]:
        np.testing.assert_array_equal(m, means[0])


def test_estimators_deterministic(data):
    x, y, xq = data
    for kind in ESTIMATORS:
        a = build_estimator(kind, x, y, PARAMS, NOISE, seed=11).predict(xq)
        b = build_estimator(kind, x, y, PARAMS, NOISE, seed=11).predict(xq)
        np.testing.assert_array_equal(a.std, b.std)


def test_build_estimator_unknown(data):
    x, y, _ = data
    with pytest.raises(ValueError):
        build_estimator("dropout", x, y, PARAMS, NOISE)


def test_refit_keeps_hyperparameters(data):
    x, y, xq = data
    est = TwoSetEstimator.fit(x[:30], y[:30], PARAMS, NOISE, seed=2)
    new = refit(est, x, y)
    assert new.full_model.params == PARAMS and new.full_model.noise == NOISE
    assert len(new.index_a) + len(new.index_b) == 40
    assert new.split_seed == 2
    boot = refit(BootstrapEstimator.fit(x[:30], y[:30], PARAMS, NOISE, n_members=4), x, y, seed=9)
    assert boot.n_members == 4 and boot.resample_seed == 9
