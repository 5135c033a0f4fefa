import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scenemem.decay import (
    DecayConfig,
    DecayState,
    cosine_distance,
    decay_weights,
    discrepancy,
    normalize,
    rates,
    scale_kv,
    step_and_scale,
)
from scenemem.errors import ConfigError
from scenemem.rope import RopeConfig, apply_rotation
from scenemem.verify import decay_logit_error, old_mass_curve

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_distance_endpoints():
    k = np.array([1.0, -2.0, 0.5])
    assert cosine_distance(k, k) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance(k, -k) == pytest.approx(2.0)
    assert cosine_distance(np.zeros(3), k) == 1.0


def test_normalize_three_points():
    delta = normalize(np.array([0.0, 1.0, 2.0]), 1e-6)
    np.testing.assert_allclose(delta, [0.0, 0.5, 1.0], atol=1e-6)
    assert normalize(np.array([]), 1e-6).size == 0


def test_discrepancy_per_group():
    old = np.array([[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]])
    new = np.array([[[1.0, 0.0], [-1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]])
    d, delta = discrepancy(old, new, axis=1)
    np.testing.assert_allclose(d, [[0.0, 2.0], [0.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(delta, [[0.0, 1.0], [0.0, 1.0]], atol=1e-5)


def test_rates_endpoints_and_midpoint():
    np.testing.assert_allclose(rates([0.0, 1.0, 0.5], 0.05, 0.7), [0.05, 0.7, 0.375])
    with pytest.raises(ConfigError):
        rates(0.5, 0.8, 0.1)


def test_weight_closed_forms():
    assert decay_weights(0.7, 0) == 1.0
    assert decay_weights(0.1, 10) == pytest.approx(math.exp(-1))
    assert decay_weights(0.05, 7) == pytest.approx(math.exp(-0.35))
    assert decay_weights(0.05, 7) >= 0.69


def test_decayed_logit_example():
    q = np.array([1.0, 1.0, 0.0, 0.0])
    k = np.array([1.0, 1.0, 0.0, 0.0])  # q.k = 2
    ks, _ = scale_kv(k, k, 0.5)
    assert q @ ks / math.sqrt(4) == 0.5


def test_logit_homogeneity():
    assert decay_logit_error(500, seed=3) < 1e-12


def test_step_and_scale_sequence():
    keys = np.ones((2, 3))
    state = DecayState(np.array([0.1, 0.7]))
    k0, v0, keep = step_and_scale(keys, keys, state)
    np.testing.assert_array_equal(k0, keys)  # r = 0 leaves tokens unchanged
    assert state.r == 1 and keep.all()
    k1, _, _ = step_and_scale(keys, keys, state)
    np.testing.assert_allclose(k1[:, 0], np.exp([-0.1, -0.7]))
    for _ in range(10):
        _, _, keep = step_and_scale(keys, keys, state)
    assert keep.tolist() == [True, False]  # exp(-0.7 * 11) < 1e-3


@pytest.mark.parametrize("kwargs", [{"mu_min": 0.9}, {"mu_min": -0.1}, {"epsilon": 0.0}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        DecayConfig(**kwargs)


@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_distance_range(a, b):
    d = cosine_distance(a, b)
    assert 0.0 <= d <= 2.0


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 2)))
def test_normalized_range(d):
    delta = normalize(d, 1e-6)
    assert np.all((delta >= 0) & (delta <= 1))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 50))
def test_two_level_suppression_monotone(delta, v, r):
    mu = rates(delta, 0.05, 0.7)
    contrib = lambda rr: decay_weights(mu, rr) * v  # noqa: E731
    assert contrib(r + 1) <= contrib(r)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(0, 40), st.integers(0, 1000))
def test_equal_rates_preserve_order(mu, r, seed):
    rng = np.random.default_rng(seed)
    q, keys = rng.standard_normal(8), rng.standard_normal((10, 8))
    w = decay_weights(np.full(10, mu), r)
    before = np.argsort(keys @ q, kind="stable")
    after = np.argsort(scale_kv(keys, keys, w)[0] @ q, kind="stable")
    if w[0] > 0:
        assert before.tolist() == after.tolist()


def _first_below(mu, level=0.01):
    if mu == 0:
        return math.inf
    return next(r for r in range(10_000) if decay_weights(mu, r) < level)


@given(st.one_of(st.just(0.0), st.floats(0.01, 0.69)), st.floats(0.01, 0.7))
def test_selective_forgetting(mu_min, gap):
    fast = _first_below(rates(1.0, mu_min, mu_min + gap))
    slow = _first_below(rates(0.0, mu_min, mu_min + gap))
    assert fast <= slow
    assert fast < slow or mu_min > 0 and math.ceil(math.log(100) / mu_min) == math.ceil(math.log(100) / (mu_min + gap))


def test_old_mass_transfer():
    curve = old_mass_curve(range(0, 60))
    assert all(b <= a + 1e-15 for a, b in zip(curve, curve[1:]))
    assert curve[7] < 0.05 * curve[0]
    # fully pruned limit: old tokens carry zero logit and zero value
    limit = old_mass_curve([10_000])[0]
    assert curve[-1] == pytest.approx(limit, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 8, elements=finite), st.floats(0, 1), st.floats(-60, 60))
def test_scaling_commutes_with_rotation(k, w, p):
    cfg = RopeConfig()
    before, _ = scale_kv(apply_rotation(k, p, cfg), k, w)
    after = apply_rotation(scale_kv(k, k, w)[0], p, cfg)
    np.testing.assert_allclose(before, after, atol=1e-12)
