"""Old-scene attention mass after a hard cut, with and without decay.

Prints the mean curve over seeds for r = 0..7 blocks after the cut, then the
same curve on the fixed synthetic 32-old + 32-new cache.
"""

import argparse
from dataclasses import replace

import numpy as np

from scenemem import EngineConfig, Rollout
from scenemem.decay import DecayConfig
from scenemem.scenarios import hard_cut_prompts
from scenemem.verify import old_mass_curve


def curve(cfg, seeds, before, after):
    rows = []
    for seed in seeds:
        recs = Rollout(replace(cfg, rng_seed=seed), hard_cut_prompts(before, after)).run()
        rows.append([r["attention"]["old"] for r in recs if r["scene_index"] == 2][:8])
    return np.array(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--before", type=int, default=12)
    ap.add_argument("--after", type=int, default=10)
    ap.add_argument("--feature-rms", type=float, default=2.0)
    args = ap.parse_args()

    seeds = range(args.seeds)
    base = EngineConfig(feature_rms=args.feature_rms)
    on = curve(base, seeds, args.before, args.after)
    off = curve(replace(base, decay=DecayConfig(enabled=False)), seeds, args.before, args.after)
    print("r      " + " ".join(f"{r:>8}" for r in range(8)))
    print("decay  " + " ".join(f"{x:8.4f}" for x in on.mean(0)))
    print("none   " + " ".join(f"{x:8.4f}" for x in off.mean(0)))
    ratio_on, ratio_off = on[:, 7] / on[:, 0], off[:, 7] / off[:, 0]
    print(f"r7/r0 per seed with decay: {np.round(ratio_on, 4).tolist()}")
    print(f"r7/r0 per seed without:    {np.round(ratio_off, 4).tolist()}")
    syn = old_mass_curve(range(8))
    print("synthetic cache " + " ".join(f"{x:.4f}" for x in syn) + f"  r7/r0={syn[7] / syn[0]:.4f}")


if __name__ == "__main__":
    main()
