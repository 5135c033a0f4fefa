"""Streaming multi-scene KV cache management at toy scale.

Anchors, phase-scored compressed history and a recent window keep attention
within a fixed positional horizon; scene recall frames, prompt routing and
difference-aware decay handle transitions between scenes.
"""

from .config import EngineConfig, load_config
from .engine import Rollout
from .memory import LAYOUTS, ActiveCache, CacheLayout, get_layout
from .recall import SceneMemoryPool, SceneRecallFrame
from .rope import RopeConfig
from .verify import run_verify

__all__ = [
    "ActiveCache",
    "CacheLayout",
    "EngineConfig",
    "LAYOUTS",
    "Rollout",
    "RopeConfig",
    "SceneMemoryPool",
    "SceneRecallFrame",
    "get_layout",
    "load_config",
    "run_verify",
]
__version__ = "0.1.0"
