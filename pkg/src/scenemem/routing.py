"""Transition routing between scene prompts.

A prompt may carry a control tag such as ``[10s]`` (smooth), ``[10s#]``
(hard cut) or ``[10s@]`` (recall); ``[10s@2]`` additionally names the scene
to recall. Untagged prompts are routed by cosine similarity of their
embeddings to every earlier scene.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RoutingError, TagParseError

SMOOTH, HARD, RECALL, INIT = "smooth", "hard", "recall", "init"
_TAG = re.compile(r"^(\d+(?:\.\d+)?)s([#@]?)(\d*)$")
_MODE_BY_MARK = {"": SMOOTH, "#": HARD, "@": RECALL}


@dataclass
class RoutingConfig:
    tau_smooth: float = 0.85
    tau_rec: float = 0.85
    gamma: float = 10.0
    hard_offset: int = 45
    max_offset: int = 45

    def __post_init__(self):
        if self.gamma < 0 or self.hard_offset < 0 or self.max_offset < 0:
            raise ConfigError("routing offsets must be non-negative")


@dataclass(frozen=True)
class Tag:
    mode: str
    seconds: float
    target: int | None = None  # explicit recall scene, 1-based


@dataclass
class RoutingDecision:
    mode: str
    i_star: int | None = None  # 1-based scene index
    s_max: float | None = None
    delta_t: int | None = None
    source: str = "auto"  # auto | manual | init

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "i_star": self.i_star,
            "s_max": None if self.s_max is None else round(float(self.s_max), 12),
            "delta_t": self.delta_t,
            "source": self.source,
        }


def parse_tag(text: str | None) -> Tag | None:
    """Find the control tag in a prompt, if any.

    Only bracket groups that start with a digit are treated as tags; other
    bracketed text is left alone.
    """
    if not text:
        return None
    found = None
    i = 0
    while True:
        start = text.find("[", i)
        if start < 0:
            break
        end = text.find("]", start)
        body_start = start + 1
        if end < 0:
            if body_start < len(text) and text[body_start].isdigit():
                raise TagParseError("unterminated control tag", start)
            break
        body = text[body_start:end]
        if body[:1].isdigit():
            m = _TAG.match(body)
            if m is None:
                raise TagParseError(f"malformed control tag [{body}]", start)
            if found is not None:
                raise TagParseError("more than one control tag", start)
            mark, target = m.group(2), m.group(3)
            if target and mark != "@":
                raise TagParseError(f"scene target only allowed on recall tags: [{body}]", start)
            found = Tag(_MODE_BY_MARK[mark], float(m.group(1)), int(target) if target else None)
        i = end + 1
    return found


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise RoutingError("prompt embeddings must be nonzero")
    return float(a @ b / (na * nb))


def similarities(p_t, history) -> np.ndarray:
    return np.array([cosine(p_t, p) for p in history])


def _argmax_latest(s, limit=None) -> int:
    """0-based argmax over ``s[:limit]``, ties going to the largest index."""
    s = s if limit is None else s[:limit]
    return int(len(s) - 1 - np.argmax(s[::-1]))


def route(p_t, history, tau_smooth: float = 0.85, tau_rec: float = 0.85) -> RoutingDecision:
    """Decide the transition mode for scene ``t = len(history) + 1``."""
    history = list(history)
    if not history:
        raise RoutingError("routing needs at least one earlier scene")
    s = similarities(p_t, history)
    t = len(history) + 1
    i = _argmax_latest(s)
    i_star, s_max = i + 1, float(s[i])
    if i_star == t - 1:
        mode = SMOOTH if s_max >= tau_smooth else HARD
    else:
        mode = RECALL if s_max >= tau_rec else HARD
    return RoutingDecision(mode, i_star if mode == RECALL else None, s_max)


def rope_offset(decision: RoutingDecision, t: int, cfg: RoutingConfig | None = None) -> int:
    cfg = cfg or RoutingConfig()
    if decision.mode == SMOOTH:
        return 0
    if decision.mode == HARD:
        return int(cfg.hard_offset)
    if decision.mode == RECALL:
        return int(min(cfg.max_offset, cfg.gamma * (t - decision.i_star)))
    raise RoutingError(f"no offset for mode {decision.mode!r}")


def decide(t: int, p_t, history, tag: Tag | None, cfg: RoutingConfig) -> RoutingDecision:
    """Full routing for 1-based scene ``t``: manual tag first, then similarity."""
    if t == 1:
        return RoutingDecision(INIT, source=INIT)
    if tag is not None:
        decision = RoutingDecision(tag.mode, source="manual")
        if history and p_t is not None:
            decision.s_max = float(similarities(p_t, history).max())
        if tag.mode == RECALL:
            if tag.target is not None:
                target = tag.target
            else:
                if t < 3 or p_t is None:
                    raise RoutingError(f"scene {t}: recall tag without a resolvable target")
                target = _argmax_latest(similarities(p_t, history), limit=t - 2) + 1
            if not 1 <= target <= t - 2:
                raise RoutingError(f"scene {t}: recall target {target} must be an earlier, non-adjacent scene")
            decision.i_star = target
    else:
        decision = route(p_t, history, cfg.tau_smooth, cfg.tau_rec)
    decision.delta_t = rope_offset(decision, t, cfg)
    return decision
