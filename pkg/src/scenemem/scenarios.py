"""Constructed scene streams used by tests, verification and scripts."""

from __future__ import annotations

import numpy as np

from .script import ScenePrompt


def abcabc_embeddings(dim: int = 16, seed: int = 0, cross: float = 0.2, jitter: float = 0.2):
    """Six embeddings A, B, C, A', B', C'.

    Distinct scenes share a common component giving pairwise cosine
    ``cross``; repeats add an orthogonal ``jitter`` so their cosine to the
    original is ``1 / sqrt(1 + jitter**2)``.
    """
    if dim < 7:
        raise ValueError("need at least 7 dimensions")
    basis, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    e = basis.T
    s = np.sqrt(cross)
    base = [np.sqrt(1 - cross) * e[i] + s * e[3] for i in range(3)]
    repeats = [base[i] + jitter * e[4 + i] for i in range(3)]
    return base + [r / np.linalg.norm(r) for r in repeats]


def abcabc_prompts(blocks_per_scene: int = 10, dim: int = 16, seed: int = 0):
    return [ScenePrompt(p, blocks_per_scene) for p in abcabc_embeddings(dim, seed)]


def hard_cut_prompts(blocks_before: int = 12, blocks_after: int = 12, dim: int = 16, seed: int = 0):
    a, b = abcabc_embeddings(dim, seed)[:2]
    return [ScenePrompt(a, blocks_before), ScenePrompt(b, blocks_after)]


def abcabc_script(blocks_per_scene: int = 10, dim: int = 16, seed: int = 0) -> dict:
    """JSON-ready script dict for the A-B-C-A-B-C stream."""
    names = ["A", "B", "C", "A again", "B again", "C again"]
    return {
        "version": 1,
        "scenes": [
            {"prompt_text": f"scene {n}", "embedding": [round(float(x), 15) for x in p],
             "duration_s": blocks_per_scene}
            for n, p in zip(names, abcabc_embeddings(dim, seed))
        ],
    }
