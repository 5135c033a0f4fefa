import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenemem.decay import DecayConfig
from scenemem.errors import BudgetOverflowError, ConfigError, OrderingError
from scenemem.kv import FrameKV
from scenemem.memory import (
    ANCHOR,
    COMPRESSED,
    LAYOUTS,
    RECENT,
    ActiveCache,
    AnchorPool,
    CacheLayout,
    anchor_insert_sequence,
    get_layout,
    roll_anchors,
)
from scenemem.oracles import oracle_anchor_sequence
from scenemem.recall import SceneRecallFrame

H, U, D = 2, 4, 8


def frame(i, scene=1, rng=None):
    rng = rng or np.random.default_rng(i)
    return FrameKV(i, scene, rng.standard_normal((H, U, D)), rng.standard_normal((H, U, D)))


def test_insert_sequence_examples():
    assert anchor_insert_sequence(1, 3, 12) == (3, 4, 5)
    assert anchor_insert_sequence(2, 3, 12) == (8, 7, 6)
    assert anchor_insert_sequence(4, 3, 12) == (2, 1, 0)


def test_insert_sequence_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        anchor_insert_sequence(1, 0, 12)
    with pytest.raises(ConfigError):
        anchor_insert_sequence(1, 5, 4)


@given(st.integers(1, 5000), st.integers(1, 6), st.integers(1, 40))
def test_insert_sequence_matches_oracle(r, s, extra):
    n = s + extra
    assert list(anchor_insert_sequence(r, s, n)) == oracle_anchor_sequence(r, s, n)


@given(st.integers(1, 1000), st.sampled_from([(3, 12), (3, 18), (2, 10), (4, 20)]))
def test_alternating_orientation(r, sizes):
    s, n = sizes
    a, b = anchor_insert_sequence(r, s, n), anchor_insert_sequence(r + 1, s, n)
    fwd = lambda seq: all((y - x) % n == 1 for x, y in zip(seq, seq[1:]))  # noqa: E731
    assert fwd(a) != fwd(b)


@pytest.mark.parametrize("s,n", [(3, 12), (3, 18), (2, 8), (4, 20)])
def test_traversal_covers_pool(s, n):
    for start in range(1, 10):
        seen = set()
        for r in range(start, start + 2 * n // s):
            seen.update(anchor_insert_sequence(r, s, n))
        assert seen == set(range(n))


def test_pool_warmup_is_noop():
    pool = AnchorPool(18, 12, 3)
    for i in range(17):
        pool.offer(frame(i))
    pool, rolled = roll_anchors(pool)
    assert not rolled and len(pool.active) == 0 and pool.r == 0


def test_first_roll_inserts_forward():
    pool = AnchorPool(12, 12, 3)
    for i in range(20):
        pool.offer(frame(i))
    assert len(pool.pool) == 12  # frames after the pool filled are ignored
    assert pool.roll()
    assert [f.frame_index for f in pool.active] == [3, 4, 5]


def test_active_capacity_over_many_rolls():
    pool = AnchorPool(18, 12, 3)
    for i in range(18):
        pool.offer(frame(i))
    for r in range(1, 1001):
        pool.roll()
        assert len(pool.active) == min(3 * r, 12)


def test_static_pool_keeps_first_frames():
    pool = AnchorPool(99, 3, 3, mode="static")
    for i in range(10):
        pool.offer(frame(i))
    assert not pool.roll()
    assert [f.frame_index for f in pool.active] == [0, 1, 2]


def test_layout_algebra():
    totals = {name: lay.total for name, lay in LAYOUTS.items()}
    assert totals == {
        "echo": 21, "self_forcing": 21, "inf_rope": 21,
        "longlive": 12, "rolling_sink": 21, "deep_forcing": 21,
    }
    assert (LAYOUTS["longlive"].n_anchor, LAYOUTS["longlive"].n_recent) == (3, 9)
    assert (LAYOUTS["echo"].n_anchor, LAYOUTS["echo"].n_compressed, LAYOUTS["echo"].n_recent) == (12, 3, 6)


def test_effective_layout_borrows_from_compressed():
    eff = get_layout("deep_forcing").effective(3)
    assert (eff.n_anchor, eff.n_compressed, eff.n_recent) == (12, 6, 3)
    assert get_layout("echo").effective(3) is get_layout("echo")
    with pytest.raises(ConfigError):
        CacheLayout(0, 1, 0).effective(3)


def test_unknown_layout():
    with pytest.raises(ConfigError):
        get_layout("nope")
    with pytest.raises(ConfigError):
        CacheLayout(12, 3, 7).check(21)


def test_push_and_evict():
    cache = ActiveCache(get_layout("echo"), H, U, D)
    assert cache.push_frame(frame(0)) is None
    assert [f.frame_index for f in cache.recent] == [0]
    for i in range(1, 6):
        assert cache.push_frame(frame(i)) is None
    evicted = cache.push_frame(frame(6))
    assert evicted.frame_index == 0 and len(cache.recent) == 6
    with pytest.raises(OrderingError):
        cache.push_frame(frame(6))


def test_empty_context():
    ctx = ActiveCache(get_layout("echo"), H, U, D).assemble()
    assert ctx.n_tokens == 0 and ctx.frame_equivalents == 0


def test_self_forcing_is_pure_recent_window():
    cache = ActiveCache(get_layout("self_forcing"), H, U, D)
    for i in range(30):
        cache.push_frame(frame(i))
        cache.roll()
    ctx = cache.assemble()
    assert set(ctx.segment.tolist()) == {RECENT}
    assert ctx.rope_index[::U].tolist() == list(range(21))
    assert ctx.frame[0, ::U].tolist() == list(range(9, 30))


def _fill(cache, n_frames, start=0, scene=1):
    for i in range(start, start + n_frames):
        evicted = cache.push_frame(frame(i, scene))
        if evicted is not None:
            cache.compressed.add_candidate(evicted)
        cache.anchors.offer(frame(i, scene))


def test_full_echo_context():
    cache = ActiveCache(get_layout("echo"), H, U, D, candidate_region=6)
    _fill(cache, 24)
    cache.compressed.tokens = cache.compressed.buffer[0]
    for _ in range(2):
        for t in cache.compressed.buffer[1:3]:
            cache.compressed.tokens = type(t).concat([cache.compressed.tokens, t])
    cache.compressed.tokens = cache.compressed.tokens.take(np.tile(np.arange(12), (H, 1)))
    for _ in range(4):
        cache.roll()
    ctx = cache.assemble()
    assert ctx.frame_equivalents == 21
    assert ctx.rope_index.min() == 0 and ctx.rope_index.max() == 20
    segs = ctx.segment[::U].tolist()
    assert segs == [ANCHOR] * 12 + [COMPRESSED] * 3 + [RECENT] * 6
    assert np.all(np.diff(ctx.rope_index) >= 0)


def test_budget_overflow_detected():
    cache = ActiveCache(get_layout("echo"), H, U, D)
    for i in range(22):
        cache.recent.append(frame(i))
    with pytest.raises(BudgetOverflowError):
        cache.assemble()


def test_offset_applies_to_new_block_only():
    cache = ActiveCache(get_layout("echo"), H, U, D)
    _fill(cache, 6)
    ctx = cache.assemble(n_new=3, offset=45)
    assert ctx.rope_index[::U].tolist() == [0, 1, 2, 48, 49, 50]


def test_recall_frame_takes_an_anchor_slot():
    cache = ActiveCache(get_layout("echo"), H, U, D)
    _fill(cache, 18)
    for _ in range(4):
        cache.roll()
    assert len(cache.anchors.active) == 12
    rec = SceneRecallFrame(1, np.ones((H, U, D)), np.ones((H, U, D)))
    cache.pin_recall(rec)
    assert len(cache.anchors.active) == 11 and cache.frame_equivalents() <= 21
    cache.roll()
    assert len(cache.anchors.active) == 11
    ctx = cache.assemble(current_scene=2)
    assert not ctx.old[:, :U].any()  # recall tokens never count as old


def test_decay_marks_old_tokens_only():
    cache = ActiveCache(get_layout("echo"), H, U, D)
    _fill(cache, 6, scene=1)
    _fill(cache, 3, start=6, scene=2)
    ref = np.mean([f.keys for f in list(cache.recent)[-3:]], axis=0)
    info = cache.start_decay(2, ref, DecayConfig())
    # three old frames still in the recent window, three waiting in the compression buffer
    assert info["old_tokens"] == 6 * H * U
    for f in cache.recent:
        if f.scene_id == 2:
            assert np.all(f.mu == 0)
        else:
            assert np.all((f.mu >= 0.05 - 1e-12) & (f.mu <= 0.7 + 1e-12))
    cache.step_decay()
    ctx = cache.assemble(current_scene=2)
    assert np.all(ctx.weights[~ctx.old] == 1.0)
    assert np.all(ctx.weights[ctx.old] < 1.0)


def test_pruned_frames_are_dropped():
    cache = ActiveCache(get_layout("echo"), H, U, D)
    _fill(cache, 3, scene=1)
    _fill(cache, 3, start=3, scene=2)
    cache.start_decay(2, np.ones((H, U, D)), DecayConfig(mu_min=0.7))
    for _ in range(15):  # exp(-0.7 * 10) < 1e-3
        cache.step_decay()
    assert [f.scene_id for f in cache.recent] == [2, 2, 2]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(LAYOUTS)), st.integers(1, 80), st.integers(0, 10_000))
def test_bounded_budget_any_length(name, n_frames, seed):
    layout = get_layout(name).effective(3)
    cache = ActiveCache(layout, H, U, D, topk_budget=None)
    rng = np.random.default_rng(seed)
    for i in range(n_frames):
        f = frame(i, rng=rng)
        evicted = cache.push_frame(f)
        if evicted is not None:
            cache.compressed.add_candidate(evicted)
        cache.anchors.offer(f)
        if cache.compressed.ready():
            cache.compressed.tokens = cache.compressed.buffer[-1].take(
                np.tile(np.arange(min(U, cache.compressed.budget)), (H, 1)))
            cache.compressed.buffer = []
        cache.roll()
        ctx = cache.assemble()
        assert ctx.frame_equivalents <= 21
        assert ctx.rope_index.min() >= 0 and ctx.rope_index.max() <= 20


def test_assemble_is_deterministic():
    def build():
        cache = ActiveCache(get_layout("echo"), H, U, D)
        _fill(cache, 30)
        for _ in range(6):
            cache.roll()
        return cache.assemble()

    a, b = build(), build()
    for name in ("keys", "values", "rope_index", "segment", "weights", "frame"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
