"""Brute-force reference implementations.

Nothing here calls into the fast paths: rotations use explicit 2x2 matrices
on real pairs, attention is a plain triple loop, and selection, routing and
fusion are exhaustive scans in pure Python. Used only by tests and
``verify``.
"""

from __future__ import annotations

import math

import numpy as np


def oracle_frequencies(d_head: int, base: float = 10000.0) -> list[float]:
    return [math.pow(base, -(2.0 * f) / d_head) for f in range(d_head // 2)]


def oracle_rotate(vec, position: float, base: float = 10000.0) -> np.ndarray:
    """Rotate each interleaved pair ``(x[2f], x[2f+1])`` by a 2x2 matrix."""
    vec = np.asarray(vec, dtype=np.float64)
    d = vec.shape[-1]
    out = np.empty_like(vec)
    for f, w in enumerate(oracle_frequencies(d, base)):
        c, s = math.cos(w * position), math.sin(w * position)
        x, y = vec[..., 2 * f], vec[..., 2 * f + 1]
        out[..., 2 * f] = c * x - s * y
        out[..., 2 * f + 1] = s * x + c * y
    return out


def oracle_future_attention(q_bar, keys, delta, base: float = 10000.0, position: float = 0.0):
    """Inner product of the query rotated to ``position + delta`` with keys at ``position``.

    ``q_bar`` is a flat real vector, ``keys`` is ``(n, d)`` or ``(d,)``.
    """
    q = oracle_rotate(q_bar, position + delta, base)
    k = oracle_rotate(keys, position, base)
    return k @ q


def oracle_topk(scores, frame, pos, k: int) -> list[set]:
    """Per head, the set of (frame, pos) kept by a full sort."""
    out = []
    for h in range(len(scores)):
        items = sorted(
            zip((float(s) for s in scores[h]), (int(f) for f in frame[h]), (int(p) for p in pos[h])),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        out.append({(f, p) for _, f, p in items[:k]})
    return out


def oracle_dense_attention(queries, query_pos, keys, key_pos, values, weights=None,
                           mask=None, base: float = 10000.0):
    """Triple-loop softmax attention with explicit decay scaling.

    Shapes: queries ``(H, n_q, d)``, keys/values ``(H, T, d)``, positions
    ``(n_q,)`` and ``(T,)``, weights and mask ``(H, T)``.
    """
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    H, n_q, d = queries.shape
    T = keys.shape[1]
    if weights is None:
        weights = np.ones((H, T))
    if mask is None:
        mask = np.ones((H, T), dtype=bool)
    out = np.zeros((H, n_q, d))
    probs = np.zeros((H, n_q, T))
    scale = 1.0 / math.sqrt(d)
    for h in range(H):
        krot = [oracle_rotate(keys[h, t], float(key_pos[t]), base) for t in range(T)]
        for i in range(n_q):
            q = oracle_rotate(queries[h, i], float(query_pos[i]), base)
            logits = []
            for t in range(T):
                if mask[h, t]:
                    logits.append(sum(q[j] * weights[h, t] * krot[t][j] for j in range(d)) * scale)
                else:
                    logits.append(None)
            top = max(x for x in logits if x is not None)
            ex = [0.0 if x is None else math.exp(x - top) for x in logits]
            z = math.fsum(ex)
            for t in range(T):
                p = ex[t] / z
                probs[h, i, t] = p
                out[h, i] += p * weights[h, t] * values[h, t]
    return out, probs


def oracle_route(p_t, history, tau_smooth: float = 0.85, tau_rec: float = 0.85):
    """Exhaustive similarity scan; returns ``(mode, i_star, s_max)`` with 1-based i_star."""
    def cos(a, b):
        dot = math.fsum(x * y for x, y in zip(a, b))
        return dot / (math.sqrt(math.fsum(x * x for x in a)) * math.sqrt(math.fsum(y * y for y in b)))

    t = len(history) + 1
    best_i, best_s = None, -math.inf
    for i, p in enumerate(history, start=1):
        s = cos(p_t, p)
        if s >= best_s:  # later scenes win ties
            best_i, best_s = i, s
    if best_i == t - 1 and best_s >= tau_smooth:
        return "smooth", None, best_s
    if best_i != t - 1 and best_s >= tau_rec:
        return "recall", best_i, best_s
    return "hard", None, best_s


def oracle_offset(mode: str, t: int, i_star=None, gamma: float = 10.0, cap: int = 45) -> int:
    if mode == "smooth":
        return 0
    if mode == "hard":
        return cap
    return int(min(cap, gamma * (t - i_star)))


def oracle_anchor_sequence(r: int, s: int, n: int) -> list[int]:
    u = (r * s) % n
    if r % 2 == 1:
        return [(u + i) % n for i in range(s)]
    return [(u + s - 1 - i) % n for i in range(s)]


def oracle_fuse(candidate_keys, candidate_values, centers):
    """Per-position softmax fusion with explicit loops.

    ``candidate_keys``/``values``: ``(M, H, U, d)``; ``centers``: ``(H, U, d)``.
    Returns ``(k_rec, v_rec, alpha)``.
    """
    K = np.asarray(candidate_keys, dtype=np.float64)
    V = np.asarray(candidate_values, dtype=np.float64)
    M, H, U, d = K.shape
    k_rec = np.zeros((H, U, d))
    v_rec = np.zeros((H, U, d))
    alpha = np.zeros((M, H, U))
    for h in range(H):
        for u in range(U):
            c = centers[h, u]
            nc = math.sqrt(math.fsum(x * x for x in c))
            sims = []
            for j in range(M):
                k = K[j, h, u]
                nk = math.sqrt(math.fsum(x * x for x in k))
                sims.append(0.0 if nc == 0 or nk == 0 else math.fsum(a * b for a, b in zip(c, k)) / (nc * nk))
            ex = [math.exp(s) for s in sims]
            z = math.fsum(ex)
            for j in range(M):
                a = ex[j] / z
                alpha[j, h, u] = a
                k_rec[h, u] += a * K[j, h, u]
                v_rec[h, u] += a * V[j, h, u]
    return k_rec, v_rec, alpha


def oracle_mean(batches):
    """Two-pass mean of a list of ``(n_i, ...)`` arrays over all rows."""
    rows = [row for b in batches for row in np.asarray(b)]
    total = np.zeros_like(rows[0], dtype=np.complex128 if np.iscomplexobj(rows[0]) else np.float64)
    for row in rows:
        total = total + row
    return total / len(rows)
