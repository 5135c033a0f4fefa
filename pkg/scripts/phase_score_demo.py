"""Phase-coherent score against temporal distance, and the anchor schedule."""

import argparse

import numpy as np

from scenemem.compression import phase_score
from scenemem.memory import anchor_insert_sequence
from scenemem.oracles import oracle_future_attention
from scenemem.rope import RopeConfig, frequencies, to_complex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d-head", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    q, k = rng.standard_normal((2, args.d_head))
    omega = frequencies(RopeConfig(d_head=args.d_head))
    print(f"{'delta':>6} {'score':>10} {'rotated':>10}")
    for delta in (0, 1, 2, 5, 10, 20, 45):
        fast = float(phase_score(to_complex(q), to_complex(k), delta, omega))
        ref = float(oracle_future_attention(q, k, delta))
        print(f"{delta:>6} {fast:>10.5f} {ref:>10.5f}")
    print("\nanchor insert slots (S=3, pool 18)")
    for r in range(1, 9):
        print(f"r={r}: {anchor_insert_sequence(r, 3, 18)}")


if __name__ == "__main__":
    main()
