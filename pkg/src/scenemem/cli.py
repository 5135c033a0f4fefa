"""Command-line entry point.

Subcommands: ``run``, ``verify``, ``compare-layouts`` and ``dump-cache``.
Exit codes: 0 success, 1 verification or invariant failure, 2 bad config or
script.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .config import CONFIG_ENV, EngineConfig, load_config
from .engine import Rollout
from .errors import (
    BudgetOverflowError,
    ConfigError,
    MissingSceneError,
    RoutingError,
    SceneMemError,
    ScriptError,
)
from .memory import LAYOUTS, get_layout
from .recall import SceneMemoryPool
from .script import build_prompts, load_script
from .verify import run_verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
OLD_MASS_STEPS = 8  # r = 0..7 after each transition


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            yield fh


def _load(args, layout=None) -> tuple[EngineConfig, list]:
    """Config file, then the script's config block, then CLI flags."""
    cfg = load_config(args.config)
    script = load_script(args.script) if getattr(args, "script", None) else None
    if script is not None and script.config:
        cfg = cfg.updated(script.config)
    flags = {"rng_seed": getattr(args, "seed", None), "layout": layout or getattr(args, "layout", None)}
    cfg = cfg.updated({k: v for k, v in flags.items() if v is not None})
    prompts = build_prompts(script, cfg.embedding_dim, cfg.blocks_per_second) if script else []
    return cfg, prompts


def _rollout(args, cfg, prompts) -> Rollout:
    pool = SceneMemoryPool.load(args.pool_in) if getattr(args, "pool_in", None) else None
    return Rollout(cfg, prompts, pool=pool, timing=getattr(args, "timing", False))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# subcommands


def cmd_run(args) -> int:
    cfg, prompts = _load(args)
    rollout = _rollout(args, cfg, prompts)
    with _output(args.out) as fh:
        for rec in rollout.records(args.blocks):
            fh.write(_dumps(rec) + "\n")
    state = rollout.state()
    if args.pool_out:
        rollout.pool.save(args.pool_out)
    if args.state_out:
        Path(args.state_out).write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")
    if args.out not in (None, "-"):
        print(_dumps(state))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config, {"rng_seed": args.seed})
    report = run_verify(cfg)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_FAIL


def layout_metrics(records: list, cfg: EngineConfig) -> dict:
    """Summary row for one replayed layout."""
    lay = cfg.cache_layout
    fe = np.array([r["cache"]["frame_equivalents"] for r in records])
    seg = {
        name: float(np.mean([r["attention"][name] for r in records]))
        for name in ("anchor", "recall", "compressed", "recent")
    }
    curve = []
    for step in range(OLD_MASS_STEPS):
        vals = [r["attention"]["old"] for r in records if r["scene_index"] > 1 and r["block_in_scene"] == step]
        curve.append(float(np.mean(vals)) if vals else None)
    fid = [r["recall"]["fidelity"] for r in records
           if r["recall"] and r["recall"].get("fidelity") is not None]
    row = {
        "layout": cfg.layout,
        "n_anchor": lay.n_anchor,
        "n_compressed": lay.n_compressed,
        "n_recent": lay.n_recent,
        "blocks": len(records),
        "mean_frame_equivalents": float(fe.mean()),
        "max_frame_equivalents": int(fe.max()),
        "max_rope_index": max(r["rope_index"]["max"] for r in records),
    }
    row.update({f"mass_{k}": v for k, v in seg.items()})
    row.update({f"old_mass_r{i}": v for i, v in enumerate(curve)})
    r0, r7 = curve[0], curve[-1]
    row["old_mass_ratio_r7"] = None if not r0 or r7 is None else r7 / r0
    row["recall_injections"] = len(fid)
    row["recall_fidelity"] = float(np.mean(fid)) if fid else None
    return row


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def cmd_compare_layouts(args) -> int:
    names = [n.strip() for n in args.layouts.split(",") if n.strip()]
    if not names:
        raise ConfigError("no layouts given")
    for name in names:
        get_layout(name)  # fail before any replay
    rows = []
    for name in names:
        cfg, prompts = _load(args, layout=name)
        rows.append(layout_metrics(Rollout(cfg, prompts).run(args.blocks), cfg))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    with _output(args.out) as fh:
        fh.write(buf.getvalue())
    return EXIT_OK


def cmd_dump_cache(args) -> int:
    cfg, prompts = _load(args)
    rollout = _rollout(args, cfg, prompts)
    for _ in rollout.records(args.blocks):
        pass
    with _output(args.out) as fh:
        fh.write(json.dumps(rollout.dump_cache(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# argument parsing


def _common(p, script_required=True):
    p.add_argument("--script", required=script_required, help="scene script (JSON)")
    p.add_argument("--config", help=f"config file (JSON); default ${CONFIG_ENV}")
    p.add_argument("--seed", type=int, help="override rng_seed")
    p.add_argument("--blocks", type=int, help="stop after this many blocks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenemem", description="Multi-scene streaming KV cache simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="roll out a scene script and write a JSONL trace")
    _common(p)
    p.add_argument("--layout", choices=sorted(LAYOUTS))
    p.add_argument("--out", default="-", help="trace path ('-' for stdout)")
    p.add_argument("--state-out", help="write the final state summary here")
    p.add_argument("--pool-in", help="load a recall pool sidecar before running")
    p.add_argument("--pool-out", help="save the recall pool sidecar after running")
    p.add_argument("--timing", action="store_true", help="record wall-clock timings (not reproducible)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the oracle verification suite")
    p.add_argument("--config", help=f"config file (JSON); default ${CONFIG_ENV}")
    p.add_argument("--seed", type=int)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare-layouts", help="replay one script under several cache layouts")
    _common(p)
    p.add_argument("--layouts", default="echo,self_forcing", help="comma-separated layout names")
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_compare_layouts)

    p = sub.add_parser("dump-cache", help="print the cache contents after a rollout")
    _common(p)
    p.add_argument("--layout", choices=sorted(LAYOUTS))
    p.add_argument("--pool-in")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_dump_cache, timing=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScriptError as exc:
        print(f"script error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, RoutingError, MissingSceneError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetOverflowError as exc:
        print(f"budget violation: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SceneMemError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
