"""Bounded active cache: anchors, compressed history and a recent window.

The cache is measured in frame-equivalents (``U`` tokens per head). Anchors
are drawn from a pool of early frames and re-inserted ``S`` at a time,
alternating forward and backward traversal. Every assembled context is
re-indexed to local RoPE positions ``0..n-1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .compression import CompressedMemory
from .decay import cosine_distance, rates
from .errors import BudgetOverflowError, ConfigError, OrderingError
from .kv import FrameKV, TokenSet
from .rope import RopeConfig, relative_reindex

ANCHOR, RECALL, COMPRESSED, RECENT = 0, 1, 2, 3
SEGMENT_NAMES = {ANCHOR: "anchor", RECALL: "recall", COMPRESSED: "compressed", RECENT: "recent"}


@dataclass(frozen=True)
class CacheLayout:
    n_anchor: int = 12
    n_compressed: int = 3
    n_recent: int = 6
    anchor_mode: str = "rolling"  # rolling | static (attention sinks)
    scene_memory: bool = True  # recall, decay and transition handling

    def __post_init__(self):
        if min(self.n_anchor, self.n_compressed, self.n_recent) < 0:
            raise ConfigError("layout budgets must be non-negative")
        if self.anchor_mode not in ("rolling", "static"):
            raise ConfigError(f"unknown anchor mode {self.anchor_mode!r}")

    @property
    def total(self) -> int:
        return self.n_anchor + self.n_compressed + self.n_recent

    def check(self, window: int):
        if self.total > window:
            raise ConfigError(f"layout needs {self.total} frames but the window is {window}")

    def effective(self, block_size: int) -> "CacheLayout":
        """Layout with room for the block being generated in the recent window.

        A layout with fewer recent frames than one block borrows the shortfall
        from its compressed budget.
        """
        short = block_size - self.n_recent
        if short <= 0:
            return self
        if short > self.n_compressed:
            raise ConfigError(f"layout cannot hold a {block_size}-frame block in its recent window")
        return CacheLayout(
            self.n_anchor,
            self.n_compressed - short,
            block_size,
            self.anchor_mode,
            self.scene_memory,
        )


LAYOUTS = {
    "echo": CacheLayout(12, 3, 6, "rolling", True),
    "self_forcing": CacheLayout(0, 0, 21, "static", False),
    "inf_rope": CacheLayout(0, 0, 21, "static", False),
    "longlive": CacheLayout(3, 0, 9, "static", False),
    "rolling_sink": CacheLayout(15, 0, 6, "static", False),
    "deep_forcing": CacheLayout(12, 9, 0, "static", False),
}


def get_layout(name: str) -> CacheLayout:
    try:
        return LAYOUTS[name]
    except KeyError:
        raise ConfigError(f"unknown layout {name!r}; choose from {sorted(LAYOUTS)}") from None


def anchor_insert_sequence(r: int, s: int, pool_size: int) -> tuple[int, ...]:
    """Pool indices inserted at update ``r``: forward when odd, reversed when even."""
    if s < 1 or pool_size < s:
        raise ConfigError(f"need 1 <= S <= pool_size, got S={s}, pool_size={pool_size}")
    u = (r * s) % pool_size
    seq = tuple((u + i) % pool_size for i in range(s))
    return seq if r % 2 else seq[::-1]


@dataclass
class AnchorPool:
    capacity: int = 18  # pool size P
    n_active: int = 12  # N_anc
    insert_size: int = 3  # S
    mode: str = "rolling"
    pool: list = field(default_factory=list)
    active: deque = field(default_factory=deque)
    r: int = 0

    def __post_init__(self):
        if self.mode == "static":
            self.capacity = self.n_active

    @property
    def ready(self) -> bool:
        return len(self.pool) >= self.capacity

    def offer(self, frame: FrameKV):
        """Feed a generated frame to the pool while it is warming up."""
        if self.capacity == 0 or self.ready:
            return
        self.pool.append(frame.copy())
        if self.mode == "static":
            self.active.append(frame.copy())

    def reset_pool(self):
        self.pool = []
        self.r = 0

    def trim(self, limit: int):
        while len(self.active) > max(limit, 0):
            self.active.popleft()

    def roll(self, limit: int | None = None) -> bool:
        """One rolling update; returns False (no-op) until the pool is full."""
        if self.mode != "rolling" or self.n_active == 0 or not self.ready:
            return False
        self.r += 1
        for i in anchor_insert_sequence(self.r, self.insert_size, self.capacity):
            self.active.append(self.pool[i].copy())
        self.trim(self.n_active if limit is None else limit)
        return True


def roll_anchors(pool: AnchorPool) -> tuple[AnchorPool, bool]:
    return pool, pool.roll()


@dataclass
class Context:
    """Flat attention context; token axis ordered old to recent."""

    keys: np.ndarray  # (H, T, d) pre-RoPE
    values: np.ndarray
    rope_index: np.ndarray  # (T,)
    segment: np.ndarray  # (T,)
    weights: np.ndarray  # (H, T) decay weights
    mask: np.ndarray  # (H, T) False for pruned tokens
    frame: np.ndarray  # (H, T) source frame
    scene: np.ndarray  # (H, T)
    old: np.ndarray  # (H, T) carried over from an earlier scene
    frame_equivalents: int = 0

    @property
    def n_tokens(self) -> int:
        return self.keys.shape[1]


class ActiveCache:
    def __init__(
        self,
        layout: CacheLayout,
        heads: int,
        tokens_per_frame: int,
        d_head: int,
        window: int = 21,
        pool_size: int = 18,
        insert_size: int = 3,
        candidate_region: int = 18,
        topk_budget: int | None = None,
        prune_threshold: float = 1e-3,
    ):
        layout.check(window)
        self.layout = layout
        self.heads, self.U, self.d_head = heads, tokens_per_frame, d_head
        self.rope = RopeConfig(d_head=d_head, window=window)
        self.anchors = AnchorPool(pool_size, layout.n_anchor, insert_size, layout.anchor_mode)
        self.recall: list = []
        budget = layout.n_compressed * tokens_per_frame if topk_budget is None else topk_budget
        if layout.n_compressed == 0:
            budget = 0
        if budget > layout.n_compressed * tokens_per_frame:
            raise ConfigError("topk_budget exceeds the compressed segment")
        self.compressed = CompressedMemory(heads, d_head, budget, candidate_region)
        self.recent: deque = deque()
        self.r = 0  # decay steps since the latest transition
        self.prune_threshold = prune_threshold
        self._last_index = -1

    @property
    def anchor_limit(self) -> int:
        return self.layout.n_anchor - len(self.recall)

    def push_frame(self, frame: FrameKV):
        """Append to the recent window; returns the evicted frame, if any."""
        if frame.frame_index <= self._last_index:
            raise OrderingError(
                f"frame {frame.frame_index} does not follow frame {self._last_index}"
            )
        self._last_index = frame.frame_index
        self.recent.append(frame)
        if len(self.recent) > self.layout.n_recent:
            return self.recent.popleft()
        return None

    def flush_recent(self) -> list:
        flushed = list(self.recent)
        self.recent.clear()
        return flushed

    def pin_recall(self, frame):
        self.recall.append(frame)
        self.anchors.trim(self.anchor_limit)

    def roll(self) -> bool:
        return self.anchors.roll(self.anchor_limit)

    def frame_equivalents(self) -> int:
        return (
            len(self.recall)
            + len(self.anchors.active)
            + self.compressed.frame_equivalents(self.U)
            + len(self.recent)
        )

    def composition(self) -> dict:
        toks = self.compressed.tokens
        return {
            "recall": [int(f.scene_id) for f in self.recall],
            "anchor": [int(f.frame_index) for f in self.anchors.active],
            "compressed": {
                "frame_equivalents": self.compressed.frame_equivalents(self.U),
                "tokens_per_head": int(toks.n),
                "source_frames": sorted({int(x) for x in np.unique(toks.frame)}),
            },
            "recent": [int(f.frame_index) for f in self.recent],
            "frame_equivalents": self.frame_equivalents(),
        }

    # decay bookkeeping

    def _holders(self):
        yield from self.anchors.active
        yield from self.recent
        yield self.compressed.tokens

    def fold_decay(self):
        """Bake the current weights into ``w_base`` and restart the step count."""
        for h in self._holders():
            h.w_base = h.weights(self.r)
            h.mu = np.zeros_like(h.mu)
        for toks in self.compressed.buffer:
            toks.w_base = toks.weights(self.r)
            toks.mu = np.zeros_like(toks.mu)
        self.r = 0

    def start_decay(self, scene_id: int, ref_keys, cfg) -> dict:
        """Assign decay rates to every token not from ``scene_id``.

        ``ref_keys`` ``(H, U, d)`` is the new scene's reference block; each old
        token is compared with the reference key at its own (head, position).
        Rates restart from step 0; earlier decay is folded into ``w_base``.
        """
        self.fold_decay()
        ref_keys = np.asarray(ref_keys, dtype=np.float64)
        entries = []
        holders = list(self._holders()) + list(self.compressed.buffer)
        for h in holders:
            if isinstance(h, FrameKV):
                if h.scene_id == scene_id:
                    continue
                sel = np.ones(h.mu.shape, dtype=bool)
                pos = np.tile(np.arange(self.U), (self.heads, 1))
            else:
                sel = h.scene != scene_id
                pos = h.pos
                if not sel.any():
                    continue
            ref = ref_keys[np.arange(self.heads)[:, None], pos]
            entries.append((h, sel, cosine_distance(h.keys, ref)))
        if not entries:
            return {"old_tokens": 0}
        axis = 1 if cfg.per_head else None
        d_sel = [np.where(sel, d, np.inf) for _, sel, d in entries]
        lo = np.min(np.concatenate(d_sel, axis=1), axis=axis, keepdims=axis is not None)
        d_sel = [np.where(sel, d, -np.inf) for _, sel, d in entries]
        hi = np.max(np.concatenate(d_sel, axis=1), axis=axis, keepdims=axis is not None)
        n_old = 0
        for h, sel, d in entries:
            delta = np.clip((d - lo) / (hi - lo + cfg.epsilon), 0.0, 1.0)
            h.mu = np.where(sel, rates(delta, cfg.mu_min, cfg.mu_max), h.mu)
            n_old += int(sel.sum())
        return {"old_tokens": n_old, "d_min": float(np.min(lo)), "d_max": float(np.max(hi))}

    def step_decay(self):
        """Advance decay one block and drop frames whose every token is pruned."""
        self.r += 1
        thr = self.prune_threshold
        for seg in (self.anchors.active, self.recent):
            keep = [f for f in seg if (f.weights(self.r) >= thr).any()]
            if len(keep) != len(seg):
                seg.clear()
                seg.extend(keep)

    def assemble(self, current_scene: int | None = None, n_new: int = 0, offset: int = 0) -> Context:
        """Ordered context: recall, anchors, compressed groups, recent frames.

        The last ``n_new`` recent frames (the block being generated) are
        shifted by ``offset`` RoPE positions; all other positions are the
        local indices ``0..n-1``.
        """
        fe = self.frame_equivalents()
        if fe > self.rope.window:
            raise BudgetOverflowError(f"cache holds {fe} frame-equivalents, window is {self.rope.window}")
        parts, slot_of_token, segs = [], [], []
        slot = 0
        for f in self.recall:
            parts.append(TokenSet.from_frame(FrameKV(0, f.scene_id, f.k_rec, f.v_rec)))
            slot_of_token.append(np.full(self.U, slot))
            segs.append(np.full(self.U, RECALL))
            slot += 1
        for f in self.anchors.active:
            parts.append(TokenSet.from_frame(f))
            slot_of_token.append(np.full(self.U, slot))
            segs.append(np.full(self.U, ANCHOR))
            slot += 1
        toks = self.compressed.tokens
        if toks.n:
            groups = self.compressed.frame_equivalents(self.U)
            parts.append(toks)
            slot_of_token.append(slot + np.arange(toks.n) // self.U)
            segs.append(np.full(toks.n, COMPRESSED))
            slot += groups
        recent = list(self.recent)
        for f in recent:
            parts.append(TokenSet.from_frame(f))
            slot_of_token.append(np.full(self.U, slot))
            segs.append(np.full(self.U, RECENT))
            slot += 1
        index = np.asarray(relative_reindex(range(slot), self.rope), dtype=np.int64)
        if not parts:
            empty = TokenSet.empty(self.heads, self.d_head)
            z = np.zeros((self.heads, 0))
            return Context(
                empty.keys, empty.values, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                z, z.astype(bool), empty.frame, empty.scene, z.astype(bool), 0,
            )
        ts = TokenSet.concat(parts)
        slots = np.concatenate(slot_of_token)
        rope_index = index[slots]
        if n_new and offset:
            rope_index = rope_index.copy()
            rope_index[-n_new * self.U:] += offset
        seg = np.concatenate(segs)
        w = ts.weights(self.r)
        mask = w >= self.prune_threshold
        if current_scene is None:
            old = np.zeros_like(mask)
        else:
            old = (ts.scene != current_scene) & (seg != RECALL)[None, :]
        return Context(ts.keys, ts.values, rope_index, seg, w, mask, ts.frame, ts.scene, old, fe)
