"""Scene recall frames: per-position softmax fusion of a scene's KV.

Each scene is summarized by one fused frame. At every (head, position) the
M candidate keys are weighted by a softmax over their cosine similarity to
the scene's query center at that position; keys and values share weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, MissingSceneError, SceneMemError

POOL_FORMAT = "scenemem-recall-pool"
POOL_VERSION = 1


@dataclass
class SceneRecallFrame:
    scene_id: int
    k_rec: np.ndarray  # (H, U, d), pre-RoPE
    v_rec: np.ndarray
    source_frames: tuple = ()
    alpha: np.ndarray = field(default=None, repr=False, compare=False)  # (M, H, U)

    @property
    def n_values(self) -> int:
        return int(self.k_rec.size + self.v_rec.size)


def candidate_positions(n: int, m: int) -> list[int]:
    """Offsets into an n-frame scene for ``m`` recall candidates.

    Candidates are spaced at a uniform stride through the middle 60% of the
    scene. Scenes too short for that fall back to the whole scene, and
    scenes with fewer than ``m`` frames use every frame.
    """
    if n <= m:
        return list(range(n))
    lo = int(np.floor(0.2 * n))
    hi = n - lo
    if hi - lo < m:
        lo, hi = 0, n
    stride = (hi - lo) // m
    return [lo + i * stride for i in range(m)]


def select_candidates(scene_frames, m: int = 5):
    frames = list(scene_frames)
    return [frames[i] for i in candidate_positions(len(frames), m)]


def _cosine(a, b):
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    return np.where(denom > 0, np.sum(a * b, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)


def fuse(candidates, centers, scene_id: int = 0) -> SceneRecallFrame:
    """Fuse candidate frames given per-position query centers ``(H, U, d)``."""
    candidates = list(candidates)
    if not candidates:
        raise SceneMemError("fusion needs at least one candidate frame")
    keys = np.stack([c.keys for c in candidates])  # (M, H, U, d)
    values = np.stack([c.values for c in candidates])
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != keys.shape[1:]:
        raise DimensionError(f"centers {centers.shape} do not match frames {keys.shape[1:]}")
    e = _cosine(centers[None], keys)  # (M, H, U)
    e = e - e.max(axis=0, keepdims=True)
    alpha = np.exp(e)
    alpha /= alpha.sum(axis=0, keepdims=True)
    return SceneRecallFrame(
        scene_id,
        np.einsum("mhu,mhud->hud", alpha, keys),
        np.einsum("mhu,mhud->hud", alpha, values),
        tuple(int(c.frame_index) for c in candidates),
        alpha,
    )


class SceneMemoryPool:
    """Recall frames keyed by scene id, plus per-position query centers."""

    def __init__(self):
        self.frames: dict[int, SceneRecallFrame] = {}
        self._center_sum: dict[int, np.ndarray] = {}
        self._center_count: dict[int, int] = {}

    def __contains__(self, scene_id):
        return scene_id in self.frames

    def __len__(self):
        return len(self.frames)

    def observe_queries(self, scene_id: int, queries):
        """Accumulate pre-RoPE queries ``(H, U, d)`` into the scene's centers."""
        q = np.asarray(queries, dtype=np.float64)
        if scene_id in self._center_sum:
            self._center_sum[scene_id] = self._center_sum[scene_id] + q
            self._center_count[scene_id] += 1
        else:
            self._center_sum[scene_id] = q.copy()
            self._center_count[scene_id] = 1

    def centers(self, scene_id: int) -> np.ndarray:
        if scene_id not in self._center_sum:
            raise MissingSceneError(f"no query centers for scene {scene_id}")
        return self._center_sum[scene_id] / self._center_count[scene_id]

    def store(self, frame: SceneRecallFrame):
        self.frames[frame.scene_id] = frame

    def retrieve(self, scene_id: int) -> SceneRecallFrame:
        try:
            return self.frames[scene_id]
        except KeyError:
            raise MissingSceneError(f"scene {scene_id} is not in the memory pool") from None

    def n_values(self) -> int:
        return sum(f.n_values for f in self.frames.values())

    def to_dict(self) -> dict:
        return {
            "format": POOL_FORMAT,
            "version": POOL_VERSION,
            "scenes": {
                str(sid): {
                    "k_rec": f.k_rec.tolist(),
                    "v_rec": f.v_rec.tolist(),
                    "source_frames": list(f.source_frames),
                }
                for sid, f in sorted(self.frames.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneMemoryPool":
        if data.get("format") != POOL_FORMAT:
            raise SceneMemError(f"not a recall pool file (format={data.get('format')!r})")
        if data.get("version") != POOL_VERSION:
            raise SceneMemError(f"unsupported recall pool version {data.get('version')!r}")
        pool = cls()
        for sid, entry in data["scenes"].items():
            pool.store(
                SceneRecallFrame(
                    int(sid),
                    np.asarray(entry["k_rec"], dtype=np.float64),
                    np.asarray(entry["v_rec"], dtype=np.float64),
                    tuple(entry["source_frames"]),
                )
            )
        return pool

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SceneMemoryPool":
        return cls.from_dict(json.loads(Path(path).read_text()))
