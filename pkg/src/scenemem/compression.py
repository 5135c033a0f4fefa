"""Drift-gated phase compression of evicted history.

Historical pre-RoPE keys are scored against a calibrated query center in the
complex channel domain, so the score anticipates the phase the key will have
relative to future queries. An amplitude term, scaled by a drift gate, adds
back query energy that the center direction does not capture. The top-K
tokens per head survive into the compressed segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    FrozenStatsError,
    NotCalibratedError,
    UndefinedDirectionError,
)
from .kv import FrameKV, TokenSet
from .rope import to_complex

FUSE_MODES = ("mean", "max")


@dataclass
class CompressionConfig:
    candidate_region: int = 18  # frames of evicted tokens that trigger a refresh
    offsets: tuple = (1, 2, 3)
    fuse: str = "mean"
    lam: float = 2.0
    topk_budget: int | None = None  # tokens per head; None -> n_compressed * U

    def __post_init__(self):
        self.offsets = tuple(int(o) for o in self.offsets)
        if self.candidate_region < 1:
            raise ConfigError("candidate_region must be >= 1")
        if not self.offsets or any(o < 1 for o in self.offsets):
            raise ConfigError("offsets must be a nonempty set of positive integers")
        if self.fuse not in FUSE_MODES:
            raise ConfigError(f"fuse must be one of {FUSE_MODES}, got {self.fuse!r}")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.topk_budget is not None and self.topk_budget < 1:
            raise ConfigError("topk_budget must be >= 1")


@dataclass
class CalibrationStats:
    """Running pre-RoPE query statistics, pooled per head."""

    q_bar: np.ndarray  # (H, F) complex
    a_bar_q: np.ndarray  # (H, F) real, >= 0
    count: int = 0
    frozen: bool = False

    @classmethod
    def empty(cls, heads: int, d_head: int) -> "CalibrationStats":
        F = d_head // 2
        return cls(np.zeros((heads, F), dtype=np.complex128), np.zeros((heads, F)))

    def freeze(self):
        self.frozen = True


def calibrate(stats: CalibrationStats, query_batch) -> CalibrationStats:
    """Fold a batch of pre-RoPE queries ``(H, n, d_head)`` into ``stats``."""
    if stats.frozen:
        raise FrozenStatsError("calibration statistics are frozen")
    z = to_complex(query_batch)
    if z.ndim != 3 or z.shape[0] != stats.q_bar.shape[0] or z.shape[2] != stats.q_bar.shape[1]:
        raise DimensionError(f"query batch shape {np.shape(query_batch)} does not match stats")
    m = z.shape[1]
    if m == 0:
        return stats
    total = stats.count + m
    stats.q_bar = stats.q_bar + (z.sum(axis=1) - m * stats.q_bar) / total
    stats.a_bar_q = stats.a_bar_q + (np.abs(z).sum(axis=1) - m * stats.a_bar_q) / total
    stats.count = total
    return stats


def phase_score(q_bar, key, delta, omega) -> np.ndarray:
    """Phase-coherent score of complex keys at temporal distance ``delta``.

    ``sum_f |q_f| |k_f| cos(phi_f + omega_f * delta)`` with
    ``phi_f = arg(q_f * conj(k_f))``. Shapes broadcast over leading axes;
    the channel axis is last.
    """
    q_bar = np.asarray(q_bar)
    key = np.asarray(key)
    omega = np.asarray(omega, dtype=np.float64)
    if q_bar.shape[-1] != key.shape[-1] or key.shape[-1] != omega.shape[-1]:
        raise DimensionError(
            f"channel mismatch: q {q_bar.shape[-1]}, k {key.shape[-1]}, omega {omega.shape[-1]}"
        )
    phi = np.angle(q_bar * np.conj(key))
    delta = np.asarray(delta, dtype=np.float64)[..., None]
    return np.sum(np.abs(q_bar) * np.abs(key) * np.cos(phi + omega * delta), axis=-1)


def amp_term(stats: CalibrationStats, key) -> np.ndarray:
    """Magnitude compensation for complex keys shaped ``(H, ..., F)``."""
    if stats.count == 0:
        raise NotCalibratedError("amplitude term needs calibration statistics")
    key = np.asarray(key)
    if key.shape[-1] != stats.a_bar_q.shape[-1]:
        raise DimensionError("channel mismatch between stats and key")
    resid = stats.a_bar_q - np.abs(stats.q_bar)  # (H, F)
    resid = resid.reshape(resid.shape[:1] + (1,) * (key.ndim - 2) + resid.shape[1:])
    return np.sum(resid * np.abs(key), axis=-1)


def complex_cosine(a, b) -> np.ndarray:
    """Cosine between complex vectors viewed as real vectors (last axis)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    sa = np.max(np.abs(a), axis=-1, keepdims=True)
    sb = np.max(np.abs(b), axis=-1, keepdims=True)
    if np.any(sa == 0) or np.any(sb == 0):
        raise UndefinedDirectionError("cosine of a zero vector is undefined")
    # rescale so tiny vectors do not underflow; real division, since complex
    # division by a subnormal overflows
    a = a.real / sa + 1j * (a.imag / sa)
    b = b.real / sb + 1j * (b.imag / sb)
    na = np.sqrt(np.sum(np.abs(a) ** 2, axis=-1))
    nb = np.sqrt(np.sum(np.abs(b) ** 2, axis=-1))
    c = np.sum((a * np.conj(b)).real, axis=-1) / (na * nb)
    return np.clip(c, -1.0, 1.0)


def drift_gate(q_bar_recent, q_bar, lam: float):
    g = np.exp(-lam * (1.0 - complex_cosine(q_bar_recent, q_bar)))
    return float(g) if np.ndim(g) == 0 else g


def score_candidates(
    candidates: TokenSet,
    stats: CalibrationStats,
    next_frame_index: int,
    cfg: CompressionConfig,
    omega,
    q_rec=None,
    gate=None,
    weights=None,
):
    """Fused selection score per (head, token); returns ``(scores, gate)``.

    ``gate`` overrides the drift gate (scalar or per head); otherwise it is
    computed from the recent query center ``q_rec`` (complex ``(H, F)``), or
    taken as 1 when neither is given. ``weights`` scales keys by their decay.
    """
    keys = candidates.keys if weights is None else candidates.keys * weights[..., None]
    kc = to_complex(keys)  # (H, n, F)
    if gate is None:
        gate = np.ones(candidates.heads) if q_rec is None else drift_gate(q_rec, stats.q_bar, cfg.lam)
    gate = np.broadcast_to(np.asarray(gate, dtype=np.float64), (candidates.heads,))
    amp = amp_term(stats, kc)  # (H, n)
    q = stats.q_bar[:, None, :]
    per_offset = []
    for o in cfg.offsets:
        delta = next_frame_index - candidates.frame + o
        per_offset.append(phase_score(q, kc, delta, omega) + gate[:, None] * amp)
    stacked = np.stack(per_offset)
    fused = stacked.mean(axis=0) if cfg.fuse == "mean" else stacked.max(axis=0)
    return fused, gate


@dataclass
class ScoredToken:
    source_frame: int
    head: int
    spatial_pos: int
    score: float
    key_raw: np.ndarray
    value: np.ndarray


def scored_tokens(candidates: TokenSet, scores) -> list[ScoredToken]:
    out = []
    for h in range(candidates.heads):
        for j in range(candidates.n):
            out.append(
                ScoredToken(
                    int(candidates.frame[h, j]),
                    h,
                    int(candidates.pos[h, j]),
                    float(scores[h, j]),
                    candidates.keys[h, j],
                    candidates.values[h, j],
                )
            )
    return out


def topk_indices(scores, frame, pos, k: int) -> np.ndarray:
    """Indices ``(H, min(k, n))`` of the k best tokens per head.

    Ranking is score descending, ties broken by (frame, spatial_pos)
    ascending. The returned indices are ordered by (frame, spatial_pos).
    """
    if k < 1:
        raise ConfigError("K must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    H, n = scores.shape
    m = min(k, n)
    out = np.empty((H, m), dtype=np.int64)
    for h in range(H):
        order = np.lexsort((pos[h], frame[h], -scores[h]))[:m]
        keep = order[np.lexsort((pos[h][order], frame[h][order]))]
        out[h] = keep
    return out


def compress(candidates: TokenSet, scores, k: int):
    """Keep the top-k tokens per head; returns ``(kept, kept_scores)``."""
    idx = topk_indices(scores, candidates.frame, candidates.pos, k)
    return candidates.take(idx), np.take_along_axis(np.asarray(scores), idx, axis=1)


@dataclass
class CompressedMemory:
    """Token-level compressed segment plus its staging buffer of evicted frames."""

    heads: int
    d_head: int
    budget: int  # tokens per head, 0 disables the segment
    candidate_region: int = 18
    tokens: TokenSet = None
    scores: np.ndarray = None
    buffer: list = field(default_factory=list)

    def __post_init__(self):
        if self.tokens is None:
            self.tokens = TokenSet.empty(self.heads, self.d_head)
            self.scores = np.zeros((self.heads, 0))

    @property
    def enabled(self) -> bool:
        return self.budget > 0

    def frame_equivalents(self, tokens_per_frame: int) -> int:
        return math.ceil(self.tokens.n / tokens_per_frame)

    def add_candidate(self, frame: FrameKV):
        if self.enabled:
            self.buffer.append(TokenSet.from_frame(frame))

    def ready(self) -> bool:
        return self.enabled and len(self.buffer) >= self.candidate_region

    def refresh(self, stats, next_frame_index, cfg: CompressionConfig, omega, q_rec=None, r=0,
                prune_threshold=None):
        """Re-score stored tokens together with the buffer and keep the top-K.

        Tokens whose decay weight fell below ``prune_threshold`` score -inf,
        so they are only kept when nothing else is left.
        """
        pool = TokenSet.concat([self.tokens] + self.buffer)
        w = pool.weights(r)
        scores, gate = score_candidates(
            pool, stats, next_frame_index, cfg, omega, q_rec=q_rec, weights=w
        )
        if prune_threshold is not None:
            scores = np.where(w >= prune_threshold, scores, -np.inf)
        self.tokens, self.scores = compress(pool, scores, self.budget)
        self.buffer = []
        live = scores[np.isfinite(scores)]
        return {
            "candidates": int(pool.n),
            "kept": int(self.tokens.n),
            "gate": [float(g) for g in gate],
            "score_min": float(live.min()) if live.size else None,
            "score_mean": float(live.mean()) if live.size else None,
            "score_max": float(live.max()) if live.size else None,
        }
