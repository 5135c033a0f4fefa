"""Streaming multi-scene rollout over the toy attention core.

One trace record is produced per generated block. The engine owns the
lifecycle: anchors and compressed history while a scene runs, a recall frame
stored when it ends, and routing, flushing, recall injection and decay at
every transition.
"""

from __future__ import annotations

import time
from collections import deque

import numpy as np

from .attention import SyntheticDynamics, attend
from .compression import CalibrationStats, calibrate
from .config import EngineConfig
from .errors import BudgetOverflowError, ScriptError
from .memory import ActiveCache
from .recall import SceneMemoryPool, candidate_positions, fuse
from .rope import frequencies, to_complex
from .routing import HARD, RECALL, decide

TRACE_SCHEMA = 1
_HIST_EDGES = np.array([0.0, 1e-3, 1e-2, 1e-1, 0.5, 1.0 + 1e-12])


def _r(x, nd=10):
    if x is None or not np.isfinite(x):
        return None
    return round(float(x), nd)


class Rollout:
    def __init__(self, cfg: EngineConfig, prompts, pool: SceneMemoryPool | None = None,
                 timing: bool = False):
        if not prompts:
            raise ScriptError("rollout needs at least one scene")
        self.cfg = cfg
        self.prompts = list(prompts)
        self.timing = timing
        self.layout = cfg.cache_layout
        self.rope = cfg.rope
        self.omega = frequencies(self.rope)
        self.dynamics = SyntheticDynamics.from_config(cfg, self.prompts[0].embedding.size)
        self.cache = ActiveCache(
            self.layout,
            cfg.heads,
            cfg.tokens_per_frame,
            cfg.d_head,
            window=cfg.window,
            pool_size=cfg.pool_size,
            insert_size=cfg.block_size,
            candidate_region=cfg.compression.candidate_region,
            topk_budget=cfg.compression.topk_budget,
            prune_threshold=cfg.decay.prune_threshold,
        )
        self.stats = CalibrationStats.empty(cfg.heads, cfg.d_head)
        self.pool = pool if pool is not None else SceneMemoryPool()
        self.recent_queries: deque = deque(maxlen=max(self.layout.n_recent, 1))
        self.decisions = []
        self.frame_counter = 0
        self.block = 0
        self.prev_out = None
        self._key_sum: dict[int, np.ndarray] = {}
        self._key_count: dict[int, int] = {}
        self._captured: list = []

    # helpers

    def _scene_key_mean(self, scene_id):
        return self._key_sum[scene_id] / self._key_count[scene_id]

    def _recent_center(self):
        if not self.recent_queries:
            return None
        q = np.concatenate(list(self.recent_queries), axis=1)  # (H, n*U, d)
        return to_complex(q.mean(axis=1))

    def _finish_scene(self, scene_id, captured):
        if not captured:
            return None
        frame = fuse(captured, self.pool.centers(scene_id), scene_id)
        self.pool.store(frame)
        return frame

    def _transition(self, t, decision):
        """Cache surgery at the start of scene ``t``; returns the recall summary."""
        cache = self.cache
        cache.recall.clear()
        if decision.mode in (HARD, RECALL):
            cache.flush_recent()
            self.recent_queries.clear()
        cache.anchors.reset_pool()
        info = None
        if decision.mode == RECALL:
            frame = self.pool.retrieve(decision.i_star)
            cache.pin_recall(frame)
            fidelity = None
            if decision.i_star in self._key_sum:
                a = frame.k_rec.ravel()
                b = self._scene_key_mean(decision.i_star).ravel()
                fidelity = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
            info = {"injected": decision.i_star, "fidelity": _r(fidelity)}
        return info

    # main loop

    def records(self, max_blocks: int | None = None):
        """Generate trace records, one per block."""
        cfg, cache = self.cfg, self.cache
        S, U = cfg.block_size, cfg.tokens_per_frame
        history = []
        for t, prompt in enumerate(self.prompts, start=1):
            scene_id = t
            decision = decide(t, prompt.embedding, history, prompt.tag if t > 1 else None, cfg.routing)
            self.decisions.append(decision)
            history.append(prompt.embedding)
            lifecycle = t > 1 and self.layout.scene_memory
            recall_info = None
            if t > 1 and self.layout.scene_memory:
                stored = self._finish_scene(t - 1, self._captured)
                recall_info = self._transition(t, decision)
                if stored is not None:
                    recall_info = dict(recall_info or {}, stored=t - 1)
            pending_decay = lifecycle and cfg.decay.enabled
            n_frames = prompt.duration_blocks * S
            capture = set(candidate_positions(n_frames, cfg.recall_candidates))
            self._captured = []
            for k in range(prompt.duration_blocks):
                if max_blocks is not None and self.block >= max_blocks:
                    return
                started = time.perf_counter() if self.timing else None
                first = self.frame_counter
                frames, queries = self.dynamics.generate_block(
                    self.prev_out, prompt.embedding, first, S, scene_id
                )
                for j, f in enumerate(frames):
                    evicted = cache.push_frame(f)
                    if evicted is not None:
                        cache.compressed.add_candidate(evicted)
                    cache.anchors.offer(f)
                    if k * S + j in capture:
                        self._captured.append(f.copy())
                per_frame_q = queries.reshape(cfg.heads, S, U, cfg.d_head)
                for j in range(S):
                    self.recent_queries.append(per_frame_q[:, j])
                    self.pool.observe_queries(scene_id, per_frame_q[:, j])
                    ks = frames[j].keys
                    if scene_id in self._key_sum:
                        self._key_sum[scene_id] = self._key_sum[scene_id] + ks
                        self._key_count[scene_id] += 1
                    else:
                        self._key_sum[scene_id] = ks.copy()
                        self._key_count[scene_id] = 1
                if not self.stats.frozen:
                    calibrate(self.stats, queries)
                    if self.frame_counter + S >= cfg.n_calibration_frames:
                        self.stats.freeze()
                compression = None
                if cache.compressed.ready():
                    compression = cache.compressed.refresh(
                        self.stats, first + S, cfg.compression, self.omega,
                        q_rec=self._recent_center(), r=cache.r,
                        prune_threshold=cfg.decay.prune_threshold,
                    )
                    for key in ("score_min", "score_mean", "score_max"):
                        compression[key] = _r(compression[key])
                    compression["gate"] = [_r(g) for g in compression["gate"]]
                offset = decision.delta_t if (k == 0 and lifecycle and cfg.rope_offsets) else 0
                try:
                    ctx = cache.assemble(current_scene=scene_id, n_new=S, offset=offset or 0)
                except BudgetOverflowError as exc:
                    raise BudgetOverflowError(str(exc), self.block) from exc
                query_index = ctx.rope_index[-S * U:]
                out, mass = attend(queries, query_index, ctx, self.rope)
                last = first + S - 1
                if ctx.frame.max() > last:
                    raise RuntimeError(f"block {self.block}: context reaches past frame {last}")
                decay_start = None
                if pending_decay:
                    ref = np.mean([f.keys for f in frames], axis=0)
                    decay_start = cache.start_decay(scene_id, ref, cfg.decay)
                    pending_decay = False
                old_w = ctx.weights[ctx.old]
                hist = np.histogram(old_w, bins=_HIST_EDGES)[0].tolist() if old_w.size else [0] * 5
                record = {
                    "schema": TRACE_SCHEMA,
                    "block": self.block,
                    "scene_index": t,
                    "scene_id": scene_id,
                    "block_in_scene": k,
                    "frames": [first, last],
                    "transition": k == 0 and t > 1,
                    "routing": decision.to_dict(),
                    "cache": cache.composition(),
                    "rope_index": {
                        "min": int(ctx.rope_index.min()),
                        "max": int(ctx.rope_index.max()),
                        "offset": int(offset or 0),
                    },
                    "compression": compression,
                    "decay": {
                        "r": cache.r,
                        "old_tokens": int(ctx.old.sum()),
                        "weight_histogram": hist,
                        "start": decay_start,
                    },
                    "attention": {key: _r(v) for key, v in mass.items()},
                    "recall": recall_info if k == 0 else None,
                    "timing_ms": None,
                }
                self.prev_out = out
                cache.roll()
                cache.step_decay()
                self.frame_counter += S
                self.block += 1
                if self.timing:
                    record["timing_ms"] = round((time.perf_counter() - started) * 1e3, 3)
                yield record
        if self.layout.scene_memory:
            self._finish_scene(len(self.prompts), self._captured)

    def run(self, max_blocks: int | None = None) -> list:
        return list(self.records(max_blocks))

    def state(self) -> dict:
        cache = self.cache
        return {
            "blocks": self.block,
            "frames": self.frame_counter,
            "layout": self.cfg.layout,
            "cache": cache.composition(),
            "calibration": {"count": self.stats.count, "frozen": self.stats.frozen},
            "decay_r": cache.r,
            "recall_pool": {
                "scenes": sorted(self.pool.frames),
                "values": self.pool.n_values(),
            },
        }

    def dump_cache(self) -> dict:
        """Detailed snapshot of every cache segment."""
        cache = self.cache
        r = cache.r

        def frame_entry(f):
            w = f.weights(r)
            return {
                "frame": int(f.frame_index),
                "scene": int(f.scene_id),
                "weight_mean": _r(w.mean()),
                "weight_min": _r(w.min()),
            }

        toks = cache.compressed.tokens
        w = toks.weights(r)
        compressed = [
            {
                "head": h,
                "frame": int(toks.frame[h, j]),
                "pos": int(toks.pos[h, j]),
                "scene": int(toks.scene[h, j]),
                "score": _r(cache.compressed.scores[h, j]),
                "weight": _r(w[h, j]),
            }
            for h in range(toks.heads)
            for j in range(toks.n)
        ]
        ctx = cache.assemble()
        return {
            "schema": TRACE_SCHEMA,
            "state": self.state(),
            "recall": [
                {"scene": f.scene_id, "source_frames": list(f.source_frames)} for f in cache.recall
            ],
            "anchors": [frame_entry(f) for f in cache.anchors.active],
            "anchor_pool": [int(f.frame_index) for f in cache.anchors.pool],
            "anchor_updates": cache.anchors.r,
            "compressed": compressed,
            "compression_buffer_frames": len(cache.compressed.buffer),
            "recent": [frame_entry(f) for f in cache.recent],
            "rope_index": ctx.rope_index[:: cache.U].tolist(),
        }
