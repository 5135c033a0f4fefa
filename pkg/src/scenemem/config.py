"""Engine configuration and its JSON file form.

Config files are flat or sectioned JSON objects. Keys of the ``compression``,
``decay`` and ``routing`` sections may also be given at top level, e.g.
``{"layout": "echo", "lambda": 2, "mu_max": 0.7}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .compression import CompressionConfig
from .decay import DecayConfig
from .errors import ConfigError
from .memory import CacheLayout, get_layout
from .rope import RopeConfig
from .routing import RoutingConfig

CONFIG_ENV = "SCENEMEM_CONFIG"

_ALIASES = {"lambda": ("compression", "lam")}


@dataclass
class EngineConfig:
    heads: int = 2
    tokens_per_frame: int = 4  # U
    d_head: int = 8
    block_size: int = 3  # S, also the anchor insert size
    window: int = 21  # L
    rng_seed: int = 0
    layout: str = "echo"
    rope_base: float = 10000.0
    pool_size: int = 18
    recall_candidates: int = 5  # M
    calibration_frames: int | None = None  # None -> window
    blocks_per_second: float = 1.0
    rope_offsets: bool = True
    embedding_dim: int = 16
    # synthetic dynamics
    feedback: float = 0.9
    bias_scale: float = 1.0
    shared_scale: float = 1.0
    noise_scale: float = 0.1
    feature_rms: float | None = 2.0  # per-token feature RMS; None leaves features unnormalised
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    decay: DecayConfig = field(default_factory=DecayConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)

    def __post_init__(self):
        for name in ("heads", "tokens_per_frame", "d_head", "block_size", "window", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.d_head % 2:
            raise ConfigError("d_head must be even")
        if self.blocks_per_second <= 0:
            raise ConfigError("blocks_per_second must be positive")
        if self.feature_rms is not None and self.feature_rms <= 0:
            raise ConfigError("feature_rms must be positive")
        get_layout(self.layout).check(self.window)

    @property
    def rope(self) -> RopeConfig:
        return RopeConfig(self.d_head, self.rope_base, self.window)

    @property
    def cache_layout(self) -> CacheLayout:
        return get_layout(self.layout).effective(self.block_size)

    @property
    def n_calibration_frames(self) -> int:
        return self.window if self.calibration_frames is None else self.calibration_frames

    def to_dict(self) -> dict:
        d = asdict(self)
        d["compression"]["offsets"] = list(d["compression"]["offsets"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        return cls().updated(data)

    def updated(self, data: dict) -> "EngineConfig":
        sections = {"compression": {}, "decay": {}, "routing": {}}
        section_types = {
            "compression": CompressionConfig,
            "decay": DecayConfig,
            "routing": RoutingConfig,
        }
        section_keys = {
            name: {f.name for f in fields(tp)} for name, tp in section_types.items()
        }
        top = {}
        own = {f.name for f in fields(self)} - set(sections)
        for key, value in data.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                for k, v in value.items():
                    k = _ALIASES.get(k, (key, k))[1]
                    if k not in section_keys[key]:
                        raise ConfigError(f"unknown key {key}.{k}")
                    sections[key][k] = v
            elif key in _ALIASES:
                sec, k = _ALIASES[key]
                sections[sec][k] = value
            elif key in own:
                top[key] = value
            else:
                for name, keys in section_keys.items():
                    if key in keys:
                        sections[name][key] = value
                        break
                else:
                    raise ConfigError(f"unknown config key {key!r}")
        try:
            new_sections = {
                name: replace(getattr(self, name), **vals) for name, vals in sections.items()
            }
            return replace(self, **top, **new_sections)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict | None = None) -> EngineConfig:
    """Read a JSON config; ``path`` falls back to ``$SCENEMEM_CONFIG``."""
    path = path or os.environ.get(CONFIG_ENV)
    cfg = EngineConfig()
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = cfg.updated(data)
    if overrides:
        cfg = cfg.updated({k: v for k, v in overrides.items() if v is not None})
    return cfg
