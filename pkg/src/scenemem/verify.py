"""Oracle verification suite.

Each check drives a fast path and its brute-force reference from
:mod:`scenemem.oracles` over seeded random instances and records the worst
disagreement. ``run_verify`` returns a report; the CLI exits nonzero when any
check fails.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import compression as _compression
from . import oracles
from .attention import attend
from .compression import CalibrationStats, calibrate, compress, drift_gate
from .config import EngineConfig
from .decay import decay_weights, discrepancy, rates, scale_kv
from .kv import FrameKV, TokenSet
from .memory import RECENT, AnchorPool, Context, anchor_insert_sequence
from .recall import fuse
from .rope import RopeConfig, frequencies, to_complex
from .routing import HARD, INIT, RECALL, SMOOTH, Tag, decide, route
from .scenarios import abcabc_embeddings, abcabc_prompts

ABCABC_EXPECTED = (
    (INIT, None, None),
    (HARD, None, 45),
    (HARD, None, 45),
    (RECALL, 1, 30),
    (RECALL, 2, 30),
    (RECALL, 3, 30),
)


@dataclass
class Check:
    name: str
    passed: bool
    max_error: float | None = None
    tolerance: float | None = None
    cases: int = 0
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        err = "-" if self.max_error is None else f"{self.max_error:.3e}"
        tol = "-" if self.tolerance is None else f"{self.tolerance:.0e}"
        text = f"{status} {self.name:<22} cases={self.cases:<6} max_err={err:<10} tol={tol:<6} {self.seconds:6.2f}s"
        return f"{text} {self.detail}".rstrip()


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = [c.line() for c in self.checks]
        n_ok = sum(c.passed for c in self.checks)
        out.append(f"{'OK' if self.passed else 'FAILED'}: {n_ok}/{len(self.checks)} checks passed")
        return out

    def to_dict(self) -> dict:
        def plain(v):
            return v.item() if isinstance(v, np.generic) else v

        checks = [{k: plain(v) for k, v in c.__dict__.items()} for c in self.checks]
        return {"passed": bool(self.passed), "checks": checks}


def _timed(fn):
    def wrapper(cfg):
        start = time.perf_counter()
        check = fn(cfg)
        check.seconds = time.perf_counter() - start
        return check

    wrapper.__name__ = fn.__name__
    return wrapper


# phase-coherent scoring


def phase_score_cases(n: int, seed: int = 0, dims=(8, 16, 64)):
    """Seeded ``(q_bar, key, delta, position, d)`` cases, real vectors."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        d = dims[i % len(dims)]
        q = rng.standard_normal(d) * rng.uniform(0.1, 3.0)
        k = rng.standard_normal(d) * rng.uniform(0.1, 3.0)
        if i % 50 == 0:
            k = q.copy()
        delta = float(rng.integers(-60, 61)) if i % 2 else float(rng.uniform(-60, 60))
        p = float(rng.uniform(0, 1000))
        yield q, k, delta, p, d


def phase_score_error(q, k, delta, p, base: float) -> float:
    """Relative disagreement between ``phase_score`` and the explicit rotation.

    Normalised by ``sum_f |q_f| |k_f|``, the largest value the score can take,
    so cancelling cases do not blow up the ratio.
    """
    d = q.shape[-1]
    omega = frequencies(RopeConfig(d_head=d, base=base))
    qc, kc = to_complex(q), to_complex(k)
    fast = float(_compression.phase_score(qc, kc, delta, omega))
    ref = float(oracles.oracle_future_attention(q, k, delta, base, p))
    scale = float(np.sum(np.abs(qc) * np.abs(kc)))
    if scale == 0.0:
        return abs(fast - ref)
    return abs(fast - ref) / scale


@_timed
def check_phase_score(cfg: EngineConfig) -> Check:
    n, tol = 10_000, 1e-6
    dims = tuple(sorted({cfg.d_head, 16, 64}))
    worst = max(phase_score_error(q, k, dl, p, cfg.rope_base)
                for q, k, dl, p, _ in phase_score_cases(n, cfg.rng_seed, dims))
    return Check("phase_score", worst < tol, worst, tol, n)


def _oracle_amp(q_bar, a_bar, key_real):
    # sum_f (a_f - |q_f|) |k_f| over interleaved pairs
    total = 0.0
    for f in range(len(q_bar)):
        kmag = math.hypot(key_real[2 * f], key_real[2 * f + 1])
        total += (a_bar[f] - abs(q_bar[f])) * kmag
    return total


@_timed
def check_fused_score(cfg: EngineConfig) -> Check:
    """Fused multi-offset scores against rotation-based references."""
    rng = np.random.default_rng([cfg.rng_seed, 7])
    H, d, tol = cfg.heads, cfg.d_head, 1e-6
    omega = frequencies(cfg.rope)
    ccfg = cfg.compression
    worst, cases = 0.0, 0
    for _ in range(20):
        n = int(rng.integers(1, 24))
        stats = CalibrationStats.empty(H, d)
        calibrate(stats, rng.standard_normal((H, 9, d)) + rng.standard_normal(d))
        toks = TokenSet(
            rng.standard_normal((H, n, d)), rng.standard_normal((H, n, d)),
            rng.integers(0, 40, (H, n)), rng.integers(0, 4, (H, n)), np.zeros((H, n), dtype=np.int64),
        )
        gate = rng.uniform(0.0, 1.0, H)
        nxt = 45
        fast, _ = _compression.score_candidates(toks, stats, nxt, ccfg, omega, gate=gate)
        q_real = np.empty((H, d))
        q_real[:, 0::2], q_real[:, 1::2] = stats.q_bar.real, stats.q_bar.imag
        for h in range(H):
            for j in range(n):
                k = toks.keys[h, j]
                amp = _oracle_amp(stats.q_bar[h], stats.a_bar_q[h], k)
                per = [
                    float(oracles.oracle_future_attention(
                        q_real[h], k, nxt - toks.frame[h, j] + o, cfg.rope_base, 3.0))
                    + gate[h] * amp
                    for o in ccfg.offsets
                ]
                ref = sum(per) / len(per) if ccfg.fuse == "mean" else max(per)
                scale = float(np.sum(np.abs(stats.a_bar_q[h]) * np.abs(to_complex(k)))) + 1e-300
                worst = max(worst, abs(fast[h, j] - ref) / scale)
                cases += 1
    return Check(f"fused_score[{ccfg.fuse}]", worst < tol, worst, tol, cases)


# selection


def topk_instances(n_instances: int, seed: int = 0, max_tokens: int = 256):
    rng = np.random.default_rng(seed)
    for i in range(n_instances):
        H = int(rng.integers(1, 4))
        n = int(rng.integers(1, max_tokens + 1))
        if i % 3 == 0:
            scores = rng.integers(-3, 4, (H, n)).astype(np.float64)  # heavy ties
        elif i % 3 == 1:
            scores = np.round(rng.standard_normal((H, n)), 1)
        else:
            scores = rng.standard_normal((H, n))
        frames = rng.integers(0, 60, (H, n))
        pos = rng.integers(0, 16, (H, n))
        for h in range(H):  # (frame, pos) identifies a token within a head
            flat = rng.choice(60 * 16, size=n, replace=False)
            frames[h], pos[h] = flat // 16, flat % 16
        k = int(rng.integers(1, n + 4))
        yield scores, frames, pos, k


@_timed
def check_topk(cfg: EngineConfig) -> Check:
    n_inst, mismatches = 1000, 0
    d = 2
    for scores, frames, pos, k in topk_instances(n_inst, cfg.rng_seed):
        H, n = scores.shape
        toks = TokenSet(np.zeros((H, n, d)), np.zeros((H, n, d)), frames, pos, np.zeros((H, n), dtype=np.int64))
        kept, _ = compress(toks, scores, k)
        ref = oracles.oracle_topk(scores, frames, pos, k)
        for h in range(H):
            got = list(zip(kept.frame[h].tolist(), kept.pos[h].tolist()))
            if set(got) != ref[h] or len(got) != len(ref[h]) or got != sorted(got):
                mismatches += 1
    return Check("topk", mismatches == 0, float(mismatches), 0.0, n_inst)


# rolling anchors


@_timed
def check_anchors(cfg: EngineConfig) -> Check:
    S, limit, bad, cases = 3, 12, 0, 0
    for P in (12, 18):
        for r in range(1, 1001):
            cases += 1
            if list(anchor_insert_sequence(r, S, P)) != oracles.oracle_anchor_sequence(r, S, P):
                bad += 1
        pool = AnchorPool(P, limit, S)
        for i in range(P):
            pool.offer(FrameKV(i, 1, np.full((1, 1, 2), float(i)), np.zeros((1, 1, 2))))
        for r in range(1, 1001):
            pool.roll()
            inserted = [int(f.frame_index) for f in list(pool.active)[-S:]]
            if len(pool.active) != min(S * r, limit):
                bad += 1
            if inserted != oracles.oracle_anchor_sequence(r, S, P):
                bad += 1
    return Check("anchors", bad == 0, float(bad), 0.0, cases)


# bounded budget


@_timed
def check_budget(cfg: EngineConfig, blocks: int = 2000) -> Check:
    from .engine import Rollout
    from .script import ScenePrompt

    run_cfg = replace(cfg, layout="echo")
    prompt = ScenePrompt(abcabc_embeddings(cfg.embedding_dim, cfg.rng_seed)[0], blocks)
    max_fe, lo, hi = 0, math.inf, -math.inf
    for rec in Rollout(run_cfg, [prompt]).records():
        max_fe = max(max_fe, rec["cache"]["frame_equivalents"])
        lo, hi = min(lo, rec["rope_index"]["min"]), max(hi, rec["rope_index"]["max"])
    ok = max_fe <= cfg.window and lo >= 0 and hi <= cfg.window - 1
    return Check("budget", ok, None, None, blocks,
                 detail=f"max_fe={max_fe} rope=[{lo},{hi}]")


# decay


def decay_logit_error(n: int, seed: int = 0) -> float:
    """Worst relative gap between ``q . (w k)`` and ``w (q . k)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 65))
        q, k, v = rng.standard_normal((3, d))
        w = float(rng.uniform(0.0, 1.0))
        ks, _ = scale_kv(k, v, w)
        got, want = float(q @ ks), w * float(q @ k)
        worst = max(worst, abs(got - want) / (np.linalg.norm(q) * np.linalg.norm(k) * max(w, 1e-300)))
    return worst


def synthetic_old_new_cache(n_old: int = 32, n_new: int = 32, d: int = 8, seed: int = 0,
                            strength: float = 4.0, spread: float = 0.3):
    """Query and cache where every key is roughly aligned with the query.

    All logits are positive (about ``strength**2 / sqrt(d)``), so removing
    old tokens moves mass to new tokens rather than being a no-op.
    """
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    q = strength * u
    keys = strength * u + spread * rng.standard_normal((n_old + n_new, d))
    values = rng.standard_normal((n_old + n_new, d))
    old = np.arange(n_old + n_new) < n_old
    return q, keys, values, old


def old_mass_curve(r_values, mu_old: float = 0.7, mu_new: float = 0.0, seed: int = 0) -> list[float]:
    """Old-token attention mass in the synthetic cache after ``r`` decay steps."""
    q, keys, values, old = synthetic_old_new_cache(seed=seed)
    T, d = keys.shape
    mu = np.where(old, mu_old, mu_new)
    out = []
    for r in r_values:
        w = decay_weights(mu, r)
        ctx = Context(
            keys[None], values[None], np.zeros(T, dtype=np.int64), np.full(T, RECENT),
            w[None], (w >= 0.0)[None], np.zeros((1, T), dtype=np.int64),
            np.where(old, 1, 2)[None], old[None],
        )
        _, mass = attend(q[None, None], np.zeros(1, dtype=np.int64), ctx, RopeConfig(d_head=d))
        out.append(mass["old"])
    return out


@_timed
def check_decay(cfg: EngineConfig) -> Check:
    dc = cfg.decay
    err = decay_logit_error(1000, cfg.rng_seed)
    mu = rates(np.array([1.0, 0.0]), dc.mu_min, dc.mu_max)
    curve = old_mass_curve(range(0, 31), mu_old=float(mu[0]))
    ratio = curve[7] / curve[0]
    monotone = all(b <= a + 1e-15 for a, b in zip(curve, curve[1:]))
    w_keep = float(decay_weights(mu[1], 7))
    closed = math.exp(-7 * dc.mu_min)
    # discrepancy: identical keys give delta 0, opposite keys delta 1
    _, delta = discrepancy(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([[1.0, 0.0], [-1.0, 0.0]]),
                           dc.epsilon, axis=None)
    delta_ok = abs(delta[0]) < 1e-12 and abs(delta[1] - 1.0) < 1e-5
    ok = err < 1e-12 and ratio < 0.05 and monotone and abs(w_keep - closed) < 1e-12 and delta_ok
    return Check("decay", ok, err, 1e-12, 1000,
                 detail=f"old_mass_r7/r0={ratio:.4f} monotone={monotone} w_keep_r7={w_keep:.6f}")


# recall fusion


def fusion_cases(n: int, seed: int = 0, m: int = 5, heads: int = 2, tokens: int = 4, d: int = 8):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        frames = [
            FrameKV(i, 1, rng.standard_normal((heads, tokens, d)) * rng.uniform(0.2, 3.0),
                    rng.standard_normal((heads, tokens, d)))
            for i in range(m)
        ]
        yield frames, rng.standard_normal((heads, tokens, d))


@_timed
def check_fusion(cfg: EngineConfig) -> Check:
    H, U, d, M = cfg.heads, cfg.tokens_per_frame, cfg.d_head, cfg.recall_candidates
    worst, hull_ok, cases = 0.0, True, 0
    for frames, centers in fusion_cases(100, cfg.rng_seed, M, H, U, d):
        got = fuse(frames, centers)
        k_ref, v_ref, a_ref = oracles.oracle_fuse([f.keys for f in frames], [f.values for f in frames], centers)
        worst = max(worst, np.abs(got.k_rec - k_ref).max(), np.abs(got.v_rec - v_ref).max(),
                    np.abs(got.alpha - a_ref).max(), np.abs(got.alpha.sum(axis=0) - 1.0).max())
        bound = np.max([np.linalg.norm(f.keys, axis=-1) for f in frames], axis=0)
        hull_ok &= bool(np.all(np.linalg.norm(got.k_rec, axis=-1) <= bound + 1e-12))
        cases += 1
    for frames, centers in fusion_cases(20, cfg.rng_seed + 1, 1, H, U, d):
        got = fuse(frames, centers)
        same = np.array_equal(got.k_rec, frames[0].keys) and np.array_equal(got.v_rec, frames[0].values)
        worst = max(worst, 0.0 if same else np.inf)
        cases += 1
    tol = 1e-6
    return Check("recall_fusion", worst < tol and hull_ok, float(worst), tol, cases,
                 detail=f"hull_bound={hull_ok}")


# routing


def abcabc_decisions(cfg: EngineConfig, tags=None):
    emb = abcabc_embeddings(cfg.embedding_dim, cfg.rng_seed)
    tags = tags or [None] * len(emb)
    out = []
    for t, p in enumerate(emb, start=1):
        out.append(decide(t, p, emb[: t - 1], tags[t - 1], cfg.routing))
    return out


def manual_override_failures(cfg: EngineConfig) -> list[str]:
    """Tags at every position against the A-B-C-A-B-C stream."""
    emb = abcabc_embeddings(cfg.embedding_dim, cfg.rng_seed)
    failures = []
    for t in range(1, len(emb) + 1):
        options = [Tag(SMOOTH, 1.0), Tag(HARD, 1.0)]
        if t >= 3:
            options += [Tag(RECALL, 1.0, 1), Tag(RECALL, 1.0)]
        for tag in options:
            dec = decide(t, emb[t - 1], emb[: t - 1], tag, cfg.routing)
            if t == 1:
                ok = dec.mode == INIT  # nothing to transition from
            else:
                ok = dec.mode == tag.mode and dec.source == "manual"
                if tag.mode == RECALL:
                    target = tag.target
                    if target is None:  # most similar non-adjacent scene, latest on ties
                        target = oracles.oracle_route(emb[t - 1], emb[: t - 2], -2.0, -2.0)[1] or t - 2
                    ok = ok and dec.i_star == target
                    ok = ok and dec.delta_t == oracles.oracle_offset(RECALL, t, target, cfg.routing.gamma,
                                                                     cfg.routing.max_offset)
                else:
                    ok = ok and dec.delta_t == oracles.oracle_offset(tag.mode, t, None, cfg.routing.gamma,
                                                                     cfg.routing.hard_offset)
            if not ok:
                failures.append(f"t={t} tag={tag.mode}{'' if tag.target is None else tag.target}")
    return failures


@_timed
def check_routing(cfg: EngineConfig) -> Check:
    bad = []
    got = [(d.mode, d.i_star, d.delta_t) for d in abcabc_decisions(cfg)]
    if tuple(got) != ABCABC_EXPECTED:
        bad.append(f"abcabc={got}")
    emb = abcabc_embeddings(cfg.embedding_dim, cfg.rng_seed)
    for t in range(2, len(emb) + 1):
        mode, i_star, _ = oracles.oracle_route(emb[t - 1], emb[: t - 1], cfg.routing.tau_smooth,
                                               cfg.routing.tau_rec)
        if (mode, i_star) != got[t - 1][:2]:
            bad.append(f"oracle t={t}")
    bad += manual_override_failures(cfg)
    rng = np.random.default_rng([cfg.rng_seed, 3])
    cases = 0
    for _ in range(300):
        n_hist = int(rng.integers(1, 64))
        hist = list(rng.standard_normal((n_hist, 12)))
        if rng.uniform() < 0.5:  # exact duplicate scenes exercise the tie rule
            hist[int(rng.integers(0, n_hist))] = hist[int(rng.integers(0, n_hist))].copy()
        p = hist[int(rng.integers(0, n_hist))] + 0.3 * rng.standard_normal(12)
        tau = float(rng.uniform(0.3, 0.95))
        fast = route(p, hist, tau, tau)
        mode, i_star, s = oracles.oracle_route(p, hist, tau, tau)
        if fast.mode != mode or fast.i_star != i_star or abs(fast.s_max - s) > 1e-12:
            bad.append("random")
        cases += 1
    return Check("routing", not bad, float(len(bad)), 0.0, cases + 6, detail="; ".join(bad[:3]))


# drift gate


@_timed
def check_gate(cfg: EngineConfig) -> Check:
    q = to_complex(np.array([1.0, 0.5, -0.25, 2.0]))
    perp = to_complex(np.array([-0.5, 1.0, -2.0, -0.25]))  # orthogonal as a real vector
    worst = 0.0
    for lam in sorted({2.0, cfg.compression.lam}):
        for vec, c in ((2.0 * q, 1.0), (perp, 0.0), (-3.0 * q, -1.0)):
            worst = max(worst, abs(drift_gate(vec, q, lam) - math.exp(-lam * (1.0 - c))))
    tol = 1e-9
    return Check("drift_gate", worst < tol, worst, tol, 6)


# dense attention


def attention_cases(n: int, seed: int = 0, max_tokens: int = 64):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        H = int(rng.integers(1, 3))
        d = int(rng.choice([4, 8]))
        T = int(rng.integers(1, max_tokens + 1))
        nq = int(rng.integers(1, 5))
        keys = rng.standard_normal((H, T, d))
        values = rng.standard_normal((H, T, d))
        w = np.where(rng.uniform(size=(H, T)) < 0.5, 1.0, rng.uniform(0.0, 1.0, (H, T)))
        mask = w >= 1e-3
        mask[:, -1] = True
        index = np.sort(rng.integers(0, 21, T))
        ctx = Context(keys, values, index, np.full(T, RECENT), w, mask,
                      np.zeros((H, T), dtype=np.int64), np.zeros((H, T), dtype=np.int64),
                      np.zeros((H, T), dtype=bool))
        queries = rng.standard_normal((H, nq, d))
        q_index = rng.integers(0, 21, nq)
        yield queries, q_index, ctx, d


@_timed
def check_attention(cfg: EngineConfig) -> Check:
    worst, n = 0.0, 60
    for queries, q_index, ctx, d in attention_cases(n, cfg.rng_seed):
        rope = RopeConfig(d_head=d, base=cfg.rope_base)
        out, _ = attend(queries, q_index, ctx, rope)
        ref, _ = oracles.oracle_dense_attention(queries, q_index, ctx.keys, ctx.rope_index, ctx.values,
                                                ctx.weights, ctx.mask, cfg.rope_base)
        worst = max(worst, float(np.abs(out - ref).max()))
    tol = 1e-6
    return Check("dense_attention", worst < tol, worst, tol, n)


# calibration


@_timed
def check_calibration(cfg: EngineConfig) -> Check:
    rng = np.random.default_rng([cfg.rng_seed, 5])
    worst, n = 0.0, 50
    H, d = cfg.heads, cfg.d_head
    for _ in range(n):
        sizes = rng.integers(1, 8, int(rng.integers(1, 6)))
        batches = [rng.standard_normal((H, int(m), d)) for m in sizes]
        a, b = CalibrationStats.empty(H, d), CalibrationStats.empty(H, d)
        for x in batches:
            calibrate(a, x)
        for i in rng.permutation(len(batches)):
            calibrate(b, batches[i])
        rows = [to_complex(x).transpose(1, 0, 2) for x in batches]  # (n_i, H, F)
        want_q = oracles.oracle_mean(rows)
        want_a = oracles.oracle_mean([np.abs(r) for r in rows])
        worst = max(worst, np.abs(a.q_bar - want_q).max(), np.abs(b.q_bar - want_q).max(),
                    np.abs(a.a_bar_q - want_a).max(), np.abs(b.a_bar_q - want_a).max())
    tol = 1e-12
    return Check("calibration", worst < tol, float(worst), tol, n)


# end to end


@_timed
def check_determinism(cfg: EngineConfig) -> Check:
    from .engine import Rollout

    def trace():
        recs = Rollout(cfg, abcabc_prompts(4, cfg.embedding_dim, cfg.rng_seed)).records()
        return [json.dumps(r, sort_keys=True) for r in recs]

    a, b = trace(), trace()
    ok = a == b and len(a) == 24
    return Check("determinism", ok, None, None, len(a))


CHECKS = (
    check_phase_score,
    check_fused_score,
    check_topk,
    check_anchors,
    check_budget,
    check_decay,
    check_fusion,
    check_routing,
    check_gate,
    check_attention,
    check_calibration,
    check_determinism,
)


def run_verify(cfg: EngineConfig | None = None, checks=CHECKS) -> VerifyReport:
    cfg = cfg or EngineConfig()
    report = VerifyReport()
    for fn in checks:
        try:
            report.checks.append(fn(cfg))
        except Exception as exc:  # a crashing check is a failing check
            report.checks.append(Check(fn.__name__.removeprefix("check_"), False, detail=f"error: {exc!r}"))
    return report
