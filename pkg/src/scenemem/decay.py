"""Difference-aware soft forgetting of old-scene KV tokens.

After a transition every carried-over token gets a decay rate that grows
with how much its key disagrees with the key at the same (head, position)
in the first block of the new scene. Keys and values are both scaled by
``w = exp(-r * mu)``, which scales attention logits by ``w`` as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class DecayConfig:
    enabled: bool = True
    mu_min: float = 0.05
    mu_max: float = 0.7
    epsilon: float = 1e-6
    prune_threshold: float = 1e-3
    per_head: bool = False  # normalize discrepancy per head instead of globally

    def __post_init__(self):
        if self.mu_min > self.mu_max:
            raise ConfigError(f"mu_min {self.mu_min} exceeds mu_max {self.mu_max}")
        if self.mu_min < 0:
            raise ConfigError("mu_min must be non-negative")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")


@dataclass
class DecayState:
    mu: np.ndarray
    r: int = 0
    mu_min: float = 0.05
    mu_max: float = 0.7
    epsilon: float = 1e-6
    w_base: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.w_base is None:
            self.w_base = np.ones_like(self.mu)

    def weights(self) -> np.ndarray:
        return self.w_base * np.exp(-self.r * self.mu)

    def step(self):
        self.r += 1
        return self


def cosine_distance(a, b) -> np.ndarray:
    """``1 - cos`` along the last axis; zero-norm pairs are neutral (1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    safe = np.where(denom > 0, denom, 1.0)
    cos = np.where(denom > 0, np.sum(a * b, axis=-1) / safe, 0.0)
    return 1.0 - np.clip(cos, -1.0, 1.0)


def normalize(d, epsilon: float = 1e-6, axis=None) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.size == 0:
        return d.copy()
    lo = d.min(axis=axis, keepdims=axis is not None)
    hi = d.max(axis=axis, keepdims=axis is not None)
    return (d - lo) / (hi - lo + epsilon)


def discrepancy(old_keys, new_keys, epsilon: float = 1e-6, axis=None):
    """Raw and normalized discrepancy ``(d, delta)`` between matched keys.

    ``old_keys`` and ``new_keys`` share shape ``(..., d_head)``; ``axis``
    selects per-group normalization (``None`` is global).
    """
    d = cosine_distance(old_keys, new_keys)
    return d, normalize(d, epsilon, axis)


def rates(delta, mu_min: float, mu_max: float) -> np.ndarray:
    if mu_min > mu_max:
        raise ConfigError(f"mu_min {mu_min} exceeds mu_max {mu_max}")
    return mu_min + (mu_max - mu_min) * np.asarray(delta, dtype=np.float64)


def decay_weights(mu, r: int) -> np.ndarray:
    return np.exp(-r * np.asarray(mu, dtype=np.float64))


def scale_kv(keys, values, w):
    """Scale keys and values ``(..., d)`` by weights ``(...)``."""
    w = np.asarray(w, dtype=np.float64)[..., None]
    return w * keys, w * values


def step_and_scale(keys, values, state: DecayState, prune_threshold: float = 1e-3):
    """Scale by the current weights, then advance ``state`` one block.

    Returns ``(k, v, keep_mask)``; tokens whose weight is below
    ``prune_threshold`` are False in the mask and get dropped by callers.
    """
    w = state.weights()
    k, v = scale_kv(keys, values, w)
    state.step()
    return k, v, w >= prune_threshold
