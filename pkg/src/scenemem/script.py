"""Scene script files.

A script is a JSON object ``{"version": 1, "config": {...}, "scenes": [...]}``
(or just the scene list). Each scene gives its prompt embedding either
explicitly (``"embedding": [...]``) or as ``"seed"``, optionally steered to a
``"cosine_target"`` against an earlier ``"reference"`` scene (1-based).
Durations come from ``"duration_s"`` or from the prompt's control tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScriptError, TagParseError
from .routing import HARD, RECALL, SMOOTH, Tag, parse_tag

SCRIPT_VERSION = 1
_SCENE_KEYS = {
    "prompt_text", "prompt", "embedding", "seed", "cosine_target", "reference",
    "duration_s", "tag", "recall_target",
}


@dataclass
class ScenePrompt:
    embedding: np.ndarray
    duration_blocks: int
    text: str | None = None
    tag: Tag | None = None


@dataclass
class SceneScript:
    scenes: list  # raw scene dicts
    config: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)  # source line of each scene


def _element_lines(text: str, key: str = "scenes") -> list[int]:
    """Line numbers of the elements of the scene array, best effort."""
    dec = json.JSONDecoder()
    stripped = text.lstrip()
    if stripped.startswith("["):
        pos = text.index("[")
    else:
        marker = text.find(f'"{key}"')
        if marker < 0:
            return []
        pos = text.find("[", marker)
        if pos < 0:
            return []
    pos += 1
    lines = []
    n = len(text)
    while pos < n:
        while pos < n and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= n or text[pos] == "]":
            break
        lines.append(text.count("\n", 0, pos) + 1)
        try:
            _, pos = dec.raw_decode(text, pos)
        except json.JSONDecodeError:
            break
    return lines


def parse_script(text: str) -> SceneScript:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptError(exc.msg, exc.lineno) from exc
    if isinstance(data, list):
        data = {"scenes": data}
    if not isinstance(data, dict) or not isinstance(data.get("scenes"), list):
        raise ScriptError("script must hold a 'scenes' list", 1)
    version = data.get("version", SCRIPT_VERSION)
    if version != SCRIPT_VERSION:
        raise ScriptError(f"unsupported script version {version!r}", 1)
    if not data["scenes"]:
        raise ScriptError("script needs at least one scene", 1)
    lines = _element_lines(text)
    lines += [None] * (len(data["scenes"]) - len(lines))
    for scene, line in zip(data["scenes"], lines):
        if not isinstance(scene, dict):
            raise ScriptError("each scene must be an object", line)
        unknown = set(scene) - _SCENE_KEYS
        if unknown:
            raise ScriptError(f"unknown scene keys {sorted(unknown)}", line)
    config = data.get("config", {})
    if not isinstance(config, dict):
        raise ScriptError("'config' must be an object", 1)
    return SceneScript(data["scenes"], config, lines)


def load_script(path) -> SceneScript:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScriptError(f"cannot read script {path}: {exc}") from exc
    return parse_script(text)


def seeded_embedding(seed: int, dim: int, reference=None, cosine_target=None) -> np.ndarray:
    """Unit vector from ``seed``; with a reference, at the given cosine to it."""
    r = np.random.default_rng(seed).standard_normal(dim)
    r /= np.linalg.norm(r)
    if reference is None:
        return r
    u = np.asarray(reference, dtype=np.float64)
    u = u / np.linalg.norm(u)
    orth = r - (r @ u) * u
    orth /= np.linalg.norm(orth)
    c = float(cosine_target)
    return c * u + np.sqrt(max(0.0, 1.0 - c * c)) * orth


_TAG_FIELD = {"smooth": SMOOTH, "hard": HARD, "recall": RECALL}


def build_prompts(script: SceneScript, embedding_dim: int, blocks_per_second: float) -> list[ScenePrompt]:
    prompts: list[ScenePrompt] = []
    for i, (scene, line) in enumerate(zip(script.scenes, script.lines), start=1):
        text = scene.get("prompt_text", scene.get("prompt"))
        try:
            tag = parse_tag(text)
        except TagParseError as exc:
            raise ScriptError(f"scene {i}: {exc}", line) from exc
        if "tag" in scene:
            mode = _TAG_FIELD.get(scene["tag"])
            if mode is None:
                raise ScriptError(f"scene {i}: unknown tag {scene['tag']!r}", line)
            target = scene.get("recall_target")
            tag = Tag(mode, tag.seconds if tag else 0.0, None if target is None else int(target))
        if "embedding" in scene:
            emb = np.asarray(scene["embedding"], dtype=np.float64)
            if emb.ndim != 1 or not np.any(emb):
                raise ScriptError(f"scene {i}: embedding must be a nonzero vector", line)
        elif "seed" in scene:
            ref = scene.get("reference")
            c = scene.get("cosine_target")
            if (ref is None) != (c is None):
                raise ScriptError(f"scene {i}: cosine_target and reference go together", line)
            if ref is not None and not 1 <= int(ref) < i:
                raise ScriptError(f"scene {i}: reference must name an earlier scene", line)
            if c is not None and not -1.0 <= float(c) <= 1.0:
                raise ScriptError(f"scene {i}: cosine_target must lie in [-1, 1]", line)
            emb = seeded_embedding(
                int(scene["seed"]),
                embedding_dim,
                None if ref is None else prompts[int(ref) - 1].embedding,
                c,
            )
        else:
            raise ScriptError(f"scene {i}: needs 'embedding' or 'seed'", line)
        if prompts and emb.shape != prompts[0].embedding.shape:
            raise ScriptError(f"scene {i}: embedding dimension differs from scene 1", line)
        seconds = scene.get("duration_s", tag.seconds if tag and tag.seconds else None)
        if seconds is None or float(seconds) <= 0:
            raise ScriptError(f"scene {i}: duration must be positive", line)
        blocks = max(1, int(round(float(seconds) * blocks_per_second)))
        prompts.append(ScenePrompt(emb, blocks, text, tag))
    return prompts
