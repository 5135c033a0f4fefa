"""Roll out the A-B-C-A-B-C stream and print the per-scene routing table."""

import argparse
import json
from pathlib import Path

from scenemem import EngineConfig, Rollout
from scenemem.scenarios import abcabc_prompts


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--blocks-per-scene", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--layout", default="echo")
    ap.add_argument("--out", help="optional JSONL trace path")
    args = ap.parse_args()

    cfg = EngineConfig(rng_seed=args.seed, layout=args.layout)
    records = Rollout(cfg, abcabc_prompts(args.blocks_per_scene)).run()
    print(f"{'scene':>5} {'mode':>7} {'i*':>3} {'delta':>5} {'s_max':>7} {'fidelity':>8} {'old@0':>7} {'old@7':>7}")
    for scene in range(1, 7):
        recs = [r for r in records if r["scene_index"] == scene]
        rt = recs[0]["routing"]
        fid = (recs[0]["recall"] or {}).get("fidelity")
        old = [r["attention"]["old"] for r in recs]
        print(f"{scene:>5} {rt['mode']:>7} {rt['i_star'] or '-':>3} {rt['delta_t'] if rt['delta_t'] is not None else '-':>5} "
              f"{rt['s_max'] if rt['s_max'] is not None else float('nan'):>7.3f} "
              f"{fid if fid is not None else float('nan'):>8.4f} {old[0]:>7.4f} {old[min(7, len(old) - 1)]:>7.4f}")
    if args.out:
        Path(args.out).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


if __name__ == "__main__":
    main()
