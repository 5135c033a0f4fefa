"""Frame and token containers shared by the cache segments.

Keys are always held pre-RoPE. Decay is tracked per token as a rate ``mu`` and
a folded base weight ``w_base``; the live weight after ``r`` steps is
``w_base * exp(-r * mu)``. Tokens that were never decayed have ``mu = 0`` and
``w_base = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class FrameKV:
    frame_index: int
    scene_id: int
    keys: np.ndarray  # (H, U, d_head), pre-RoPE
    values: np.ndarray  # (H, U, d_head)
    mu: np.ndarray = field(default=None, repr=False)  # (H, U)
    w_base: np.ndarray = field(default=None, repr=False)  # (H, U)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.keys.shape != self.values.shape or self.keys.ndim != 3:
            raise DimensionError(
                f"keys {self.keys.shape} and values {self.values.shape} must be equal (H, U, d)"
            )
        if self.mu is None:
            self.mu = np.zeros(self.keys.shape[:2])
        if self.w_base is None:
            self.w_base = np.ones(self.keys.shape[:2])

    @property
    def shape(self):
        return self.keys.shape

    def weights(self, r: int) -> np.ndarray:
        return self.w_base * np.exp(-r * self.mu)

    def copy(self) -> "FrameKV":
        return FrameKV(
            self.frame_index,
            self.scene_id,
            self.keys.copy(),
            self.values.copy(),
            self.mu.copy(),
            self.w_base.copy(),
        )


@dataclass
class TokenSet:
    """Per-head token arrays; every head holds the same number of tokens."""

    keys: np.ndarray  # (H, n, d)
    values: np.ndarray  # (H, n, d)
    frame: np.ndarray  # (H, n) source frame index
    pos: np.ndarray  # (H, n) spatial position
    scene: np.ndarray  # (H, n)
    mu: np.ndarray = None  # (H, n), zeros by default
    w_base: np.ndarray = None  # (H, n), ones by default

    def __post_init__(self):
        shape = np.shape(self.frame)
        if self.mu is None:
            self.mu = np.zeros(shape)
        if self.w_base is None:
            self.w_base = np.ones(shape)

    @property
    def n(self) -> int:
        return self.keys.shape[1]

    @property
    def heads(self) -> int:
        return self.keys.shape[0]

    def weights(self, r: int) -> np.ndarray:
        return self.w_base * np.exp(-r * self.mu)

    @classmethod
    def empty(cls, heads: int, d_head: int) -> "TokenSet":
        z = np.zeros((heads, 0))
        zi = np.zeros((heads, 0), dtype=np.int64)
        return cls(
            np.zeros((heads, 0, d_head)),
            np.zeros((heads, 0, d_head)),
            zi,
            zi.copy(),
            zi.copy(),
            z,
            z.copy(),
        )

    @classmethod
    def from_frame(cls, frame: FrameKV) -> "TokenSet":
        H, U, _ = frame.shape
        return cls(
            frame.keys.copy(),
            frame.values.copy(),
            np.full((H, U), frame.frame_index, dtype=np.int64),
            np.tile(np.arange(U, dtype=np.int64), (H, 1)),
            np.full((H, U), frame.scene_id, dtype=np.int64),
            frame.mu.copy(),
            frame.w_base.copy(),
        )

    @classmethod
    def concat(cls, sets) -> "TokenSet":
        sets = list(sets)
        return cls(
            *(
                np.concatenate([getattr(s, name) for s in sets], axis=1)
                for name in ("keys", "values", "frame", "pos", "scene", "mu", "w_base")
            )
        )

    def take(self, idx: np.ndarray) -> "TokenSet":
        """Gather ``idx`` (shape ``(H, m)``) independently per head."""
        return TokenSet(
            np.take_along_axis(self.keys, idx[..., None], axis=1),
            np.take_along_axis(self.values, idx[..., None], axis=1),
            np.take_along_axis(self.frame, idx, axis=1),
            np.take_along_axis(self.pos, idx, axis=1),
            np.take_along_axis(self.scene, idx, axis=1),
            np.take_along_axis(self.mu, idx, axis=1),
            np.take_along_axis(self.w_base, idx, axis=1),
        )
