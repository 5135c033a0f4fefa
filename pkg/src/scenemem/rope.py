"""Rotary position embedding over frame-unit positions.

A flat ``d_head`` vector is viewed as ``d_head // 2`` complex channels built
from interleaved pairs ``(x[2f], x[2f+1])``. Channel ``f`` rotates by
``omega_f * position`` with ``omega_f = base ** (-2f / d_head)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetOverflowError, ConfigError, DimensionError, OrderingError


@dataclass(frozen=True)
class RopeConfig:
    d_head: int = 8
    base: float = 10000.0
    window: int = 21  # training horizon L, in frames

    def __post_init__(self):
        if self.d_head <= 0 or self.d_head % 2:
            raise ConfigError(f"d_head must be a positive even integer, got {self.d_head}")
        if not self.base > 1:
            raise ConfigError(f"base must exceed 1, got {self.base}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")


def frequencies(cfg: RopeConfig) -> np.ndarray:
    f = np.arange(cfg.d_head // 2, dtype=np.float64)
    return cfg.base ** (-2.0 * f / cfg.d_head)


def to_complex(vec: np.ndarray) -> np.ndarray:
    """Flat ``(..., d)`` real array to ``(..., d/2)`` complex channels."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] % 2:
        raise DimensionError(f"last dimension must be even, got {vec.shape[-1]}")
    return vec[..., 0::2] + 1j * vec[..., 1::2]


def from_complex(channels: np.ndarray) -> np.ndarray:
    channels = np.asarray(channels)
    out = np.empty(channels.shape[:-1] + (2 * channels.shape[-1],), dtype=np.float64)
    out[..., 0::2] = channels.real
    out[..., 1::2] = channels.imag
    return out


def apply_rotation(vec, position, cfg: RopeConfig) -> np.ndarray:
    """Rotate ``vec`` (shape ``(..., d_head)``) to ``position``.

    ``position`` may be a scalar or an array broadcastable against
    ``vec.shape[:-1]``.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != cfg.d_head:
        raise DimensionError(f"expected last dimension {cfg.d_head}, got {vec.shape[-1]}")
    angle = np.asarray(position, dtype=np.float64)[..., None] * frequencies(cfg)
    return from_complex(to_complex(vec) * np.exp(1j * angle))


def relative_reindex(frame_indices, cfg: RopeConfig) -> tuple[int, ...]:
    """Local RoPE indices ``0..n-1`` for a cache ordered old to recent."""
    idx = list(frame_indices)
    if len(idx) > cfg.window:
        raise BudgetOverflowError(f"{len(idx)} cached frames exceed window {cfg.window}")
    if any(b < a for a, b in zip(idx, idx[1:])):
        raise OrderingError("cached frame indices must be sorted ascending")
    return tuple(range(len(idx)))
