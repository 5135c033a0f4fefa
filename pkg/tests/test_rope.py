import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scenemem.errors import BudgetOverflowError, ConfigError, DimensionError, OrderingError
from scenemem.oracles import oracle_frequencies, oracle_rotate
from scenemem.rope import (
    RopeConfig,
    apply_rotation,
    frequencies,
    from_complex,
    relative_reindex,
    to_complex,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_frequencies_closed_form():
    np.testing.assert_allclose(frequencies(RopeConfig(d_head=4)), [1.0, 0.01])
    np.testing.assert_allclose(frequencies(RopeConfig(d_head=2, base=3.0)), [1.0])
    np.testing.assert_allclose(frequencies(RopeConfig(d_head=8)), oracle_frequencies(8, 10000.0), rtol=1e-15)


@pytest.mark.parametrize("kwargs", [{"d_head": 3}, {"d_head": 0}, {"base": 1.0}, {"window": 0}])
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        RopeConfig(**kwargs)


def test_complex_round_trip():
    v = np.arange(8.0)
    c = to_complex(v)
    np.testing.assert_array_equal(c, [0 + 1j, 2 + 3j, 4 + 5j, 6 + 7j])
    np.testing.assert_array_equal(from_complex(c), v)
    with pytest.raises(DimensionError):
        to_complex(np.ones(3))


def test_position_zero_is_identity():
    v = np.random.default_rng(0).standard_normal((3, 8))
    np.testing.assert_array_equal(apply_rotation(v, 0, RopeConfig()), v)


def test_quarter_turn():
    cfg = RopeConfig(d_head=2)
    out = apply_rotation(np.array([1.0, 0.0]), math.pi / 2, cfg)  # omega_0 = 1
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)


def test_matches_matrix_rotation():
    rng = np.random.default_rng(1)
    cfg = RopeConfig(d_head=16, base=500.0)
    for _ in range(20):
        v, p = rng.standard_normal(16), rng.uniform(-50, 50)
        np.testing.assert_allclose(apply_rotation(v, p, cfg), oracle_rotate(v, p, 500.0), atol=1e-12)


def test_per_row_positions():
    cfg = RopeConfig(d_head=4)
    v = np.ones((2, 3, 4))
    pos = np.array([0, 1, 2])
    out = apply_rotation(v, pos, cfg)
    for j in range(3):
        np.testing.assert_allclose(out[:, j], apply_rotation(v[:, j], j, cfg))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_rotation(np.ones(6), 1, RopeConfig(d_head=8))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 8, elements=finite), finite)
def test_isometry(v, p):
    out = apply_rotation(v, p, RopeConfig())
    assert abs(np.linalg.norm(out) - np.linalg.norm(v)) <= 1e-9 * max(1.0, np.linalg.norm(v))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 8, elements=finite), finite, finite)
def test_composition(v, a, b):
    cfg = RopeConfig()
    twice = apply_rotation(apply_rotation(v, a, cfg), b, cfg)
    once = apply_rotation(v, a + b, cfg)
    np.testing.assert_allclose(twice, once, atol=1e-9 * max(1.0, np.linalg.norm(v)))


def test_reindex_examples():
    cfg = RopeConfig()
    assert relative_reindex((100, 101, 105), cfg) == (0, 1, 2)
    assert relative_reindex((), cfg) == ()
    idx = relative_reindex(range(500, 521), cfg)
    assert idx == tuple(range(21)) and max(idx) == 20


def test_reindex_errors():
    cfg = RopeConfig()
    with pytest.raises(BudgetOverflowError):
        relative_reindex(range(22), cfg)
    with pytest.raises(OrderingError):
        relative_reindex((3, 1), cfg)


@given(st.lists(st.integers(0, 10_000), max_size=21))
def test_reindex_bounded(frames):
    idx = relative_reindex(sorted(frames), RopeConfig())
    assert all(0 <= i <= 20 for i in idx)
