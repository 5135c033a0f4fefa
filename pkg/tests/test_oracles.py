"""The references themselves, checked on hand-worked inputs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenemem.oracles import (
    oracle_anchor_sequence,
    oracle_dense_attention,
    oracle_frequencies,
    oracle_fuse,
    oracle_future_attention,
    oracle_mean,
    oracle_offset,
    oracle_rotate,
    oracle_route,
    oracle_topk,
)


def test_frequencies():
    assert oracle_frequencies(4, 100.0) == [1.0, 0.1]


def test_rotate_quarter_turn():
    np.testing.assert_allclose(oracle_rotate([1.0, 0.0], math.pi / 2, 10.0), [0.0, 1.0], atol=1e-15)


def test_zero_offset_gives_squared_norm():
    q = np.array([1.0, 2.0, -0.5, 3.0])
    assert oracle_future_attention(q, q, 0.0) == pytest.approx(q @ q, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 1000), st.integers(0, 2**31))
def test_future_attention_ignores_base_position(delta, p, seed):
    rng = np.random.default_rng(seed)
    q, k = rng.standard_normal((2, 8))
    a = oracle_future_attention(q, k, delta, 1e4, 0.0)
    b = oracle_future_attention(q, k, delta, 1e4, p)
    assert a == pytest.approx(b, abs=1e-9)


def test_topk_ties_prefer_earlier_frames():
    scores = np.array([[1.0, 2.0, 2.0, 0.5]])
    frame = np.array([[0, 3, 1, 2]])
    pos = np.array([[0, 0, 0, 0]])
    assert oracle_topk(scores, frame, pos, 1) == [{(1, 0)}]
    assert oracle_topk(scores, frame, pos, 3) == [{(1, 0), (3, 0), (0, 0)}]


def test_dense_attention_single_key():
    q = np.ones((1, 1, 2))
    k = np.array([[[0.3, -0.2]]])
    v = np.array([[[2.0, 5.0]]])
    out, probs = oracle_dense_attention(q, np.array([0]), k, np.array([0]), v, weights=np.array([[0.5]]))
    np.testing.assert_allclose(out, [[[1.0, 2.5]]])
    np.testing.assert_allclose(probs, [[[1.0]]])


def test_dense_attention_equal_logits_average():
    q = np.zeros((1, 1, 2))
    v = np.array([[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [4.0, 4.0]]])
    out, _ = oracle_dense_attention(q, np.array([3]), np.ones((1, 4, 2)), np.arange(4), v,
                                    mask=np.array([[True, True, True, False]]))
    np.testing.assert_allclose(out, [[[2 / 3, 2 / 3]]])


def test_route_cases():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert oracle_route(a, [a])[:2] == ("smooth", None)
    assert oracle_route(a, [b])[:2] == ("hard", None)
    assert oracle_route(a, [a, b])[:2] == ("recall", 1)
    assert oracle_route(a, [a, a, b])[:2] == ("recall", 2)  # latest of the tied scenes


def test_offsets():
    assert oracle_offset("smooth", 5) == 0
    assert oracle_offset("hard", 5) == 45
    assert oracle_offset("recall", 4, 1) == 30
    assert oracle_offset("recall", 9, 1) == 45


def test_anchor_sequence():
    assert oracle_anchor_sequence(1, 3, 18) == [3, 4, 5]
    assert oracle_anchor_sequence(6, 3, 18) == [2, 1, 0]


def test_fuse_identical_candidates():
    K = np.ones((3, 1, 2, 4))
    V = np.arange(3 * 8, dtype=float).reshape(3, 1, 2, 4)
    k, v, alpha = oracle_fuse(K, V, np.ones((1, 2, 4)))
    np.testing.assert_allclose(alpha, 1 / 3)
    np.testing.assert_allclose(v, V.mean(axis=0))
    np.testing.assert_allclose(k, 1.0)


def test_mean():
    np.testing.assert_allclose(oracle_mean([np.array([[1.0], [2.0]]), np.array([[6.0]])]), [3.0])
