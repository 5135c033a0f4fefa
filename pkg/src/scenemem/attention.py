"""Toy block-wise causal attention core and synthetic frame dynamics."""

from __future__ import annotations

import math

import numpy as np

from .errors import AttentionError, DimensionError
from .kv import FrameKV
from .memory import SEGMENT_NAMES, Context
from .rope import RopeConfig, apply_rotation


def attend(queries, query_index, ctx: Context, rope: RopeConfig):
    """Softmax attention of ``queries`` ``(H, n_q, d)`` over a context.

    Keys are rotated to their context positions and queries to
    ``query_index``; old tokens enter scaled by their decay weights in both
    key and value. Returns ``(output, stats)``.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if ctx.n_tokens == 0:
        raise AttentionError("attention context is empty")
    if queries.shape[0] != ctx.keys.shape[0] or queries.shape[2] != ctx.keys.shape[2]:
        raise DimensionError(f"queries {queries.shape} do not match context {ctx.keys.shape}")
    if not ctx.mask.any(axis=1).all():
        raise AttentionError("every context token of some head has been pruned")
    q = apply_rotation(queries, np.asarray(query_index)[None, :], rope)
    k = apply_rotation(ctx.keys, ctx.rope_index[None, :], rope) * ctx.weights[..., None]
    v = ctx.values * ctx.weights[..., None]
    logits = np.einsum("hqd,htd->hqt", q, k) / math.sqrt(q.shape[-1])
    logits = np.where(ctx.mask[:, None, :], logits, -np.inf)
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=-1, keepdims=True)
    out = np.einsum("hqt,htd->hqd", p, v)
    return out, attention_stats(p, ctx)


def attention_stats(p, ctx: Context) -> dict:
    """Mean attention mass per segment, averaged over heads and queries."""
    per_token = p.mean(axis=1)  # (H, T)
    mass = {name: float(per_token[:, ctx.segment == code].sum(axis=1).mean())
            for code, name in SEGMENT_NAMES.items()}
    mass["old"] = float((per_token * ctx.old).sum(axis=1).mean())
    mass["total"] = float(per_token.sum(axis=1).mean())
    return mass


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class SyntheticDynamics:
    """Stand-in generator: each frame's features follow the previous output.

    ``features = out @ A + bias(prompt) + shared + noise``, rescaled per token
    to RMS ``feature_rms`` (which sets the logit temperature); queries and keys
    share one projection of the features and values use another.
    """

    def __init__(self, heads, tokens_per_frame, d_head, A, W_qk, W_v, prompt_proj,
                 shared, noise_scale=0.0, bias_scale=1.0, seed=0, feature_rms=None):
        self.heads, self.U, self.d = heads, tokens_per_frame, d_head
        self.A, self.W_qk, self.W_v = A, W_qk, W_v
        self.prompt_proj = prompt_proj  # (E, H*U*d)
        self.shared = shared  # (H, U, d)
        self.noise_scale = noise_scale
        self.bias_scale = bias_scale
        self.feature_rms = feature_rms
        self.noise = np.random.default_rng([seed, 1])

    @classmethod
    def from_config(cls, cfg, embedding_dim=None) -> "SyntheticDynamics":
        rng = np.random.default_rng([cfg.rng_seed, 0])
        H, U, d = cfg.heads, cfg.tokens_per_frame, cfg.d_head
        E = cfg.embedding_dim if embedding_dim is None else embedding_dim
        return cls(
            H, U, d,
            A=cfg.feedback * _orthogonal(rng, d),
            W_qk=_orthogonal(rng, d),
            W_v=_orthogonal(rng, d),
            prompt_proj=rng.standard_normal((E, H * U * d)),
            shared=cfg.shared_scale * rng.standard_normal((H, U, d)),
            noise_scale=cfg.noise_scale,
            bias_scale=cfg.bias_scale,
            seed=cfg.rng_seed,
            feature_rms=cfg.feature_rms,
        )

    def bias(self, prompt) -> np.ndarray:
        if prompt is None:
            return np.zeros((self.heads, self.U, self.d))
        p = np.asarray(prompt, dtype=np.float64)
        p = p / np.linalg.norm(p)
        return self.bias_scale * (p @ self.prompt_proj).reshape(self.heads, self.U, self.d)

    def features(self, prev_out, n_frames, prompt) -> np.ndarray:
        """Features ``(n_frames, H, U, d)`` for the next block."""
        H, U, d = self.heads, self.U, self.d
        if prev_out is None:
            base = np.zeros((n_frames, H, U, d))
        else:
            base = np.asarray(prev_out).reshape(H, n_frames, U, d).transpose(1, 0, 2, 3) @ self.A
        noise = self.noise.standard_normal((n_frames, H, U, d)) * self.noise_scale
        f = base + self.bias(prompt) + self.shared + noise
        if self.feature_rms is not None:
            f = self.feature_rms * f / np.sqrt(np.mean(f ** 2, axis=-1, keepdims=True))
        return f

    def generate_block(self, prev_out, prompt, first_frame_index, n_frames, scene_id):
        """Next block of frames plus their queries ``(H, n_frames*U, d)``."""
        f = self.features(prev_out, n_frames, prompt)
        keys = f @ self.W_qk
        values = f @ self.W_v
        frames = [
            FrameKV(first_frame_index + j, scene_id, keys[j], values[j]) for j in range(n_frames)
        ]
        queries = keys.transpose(1, 0, 2, 3).reshape(self.heads, n_frames * self.U, self.d)
        return frames, queries
