"""Replay the A-B-C-A-B-C stream and a hard cut under every cache layout."""

import argparse

from scenemem import LAYOUTS, EngineConfig, Rollout
from scenemem.cli import layout_metrics
from scenemem.scenarios import abcabc_prompts, hard_cut_prompts

COLUMNS = ("mass_anchor", "mass_recall", "mass_compressed", "mass_recent", "old_mass_ratio_r7", "recall_fidelity")


def fmt(v):
    return "-" if v is None else f"{v:.4f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    streams = {"abcabc": abcabc_prompts(10), "hard_cut": hard_cut_prompts(30, 30)}
    for stream, prompts in streams.items():
        print(f"\n{stream}")
        print(f"{'layout':<14}" + "".join(f"{c:>18}" for c in COLUMNS))
        for name in LAYOUTS:
            cfg = EngineConfig(layout=name, rng_seed=args.seed)
            row = layout_metrics(Rollout(cfg, prompts).run(), cfg)
            print(f"{name:<14}" + "".join(f"{fmt(row[c]):>18}" for c in COLUMNS))


if __name__ == "__main__":
    main()
