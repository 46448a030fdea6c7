"""Hash count / family ablation on the synthetic mixture, averaged over seeds.

    python scripts/hash_ablation.py configs/simulate.json --seeds 5
"""

import argparse

import numpy as np

from lshmoe.cli import sweep_hashes
from lshmoe.config import load


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--q", default="2,4,6,8,10")
    ap.add_argument("--families", default="cp,sp")
    args = ap.parse_args()

    base = load(args.config)
    q_values = [int(v) for v in args.q.split(",")]
    families = args.families.split(",")
    table = {}
    for seed in range(args.seeds):
        for row in sweep_hashes(base.with_seed(seed), q_values, families)[1:]:
            table.setdefault((row.family, row.q), []).append(
                (row.compression_ratio, row.mean_l2_error_vs_baseline, row.predicted_speedup))

    print(f"{'family':>6} {'q':>3} {'ratio':>8} {'error':>8} {'speedup':>8}")
    for (family, q), vals in table.items():
        r, e, s = np.mean(vals, axis=0)
        print(f"{family:>6} {q:>3} {r:8.3f} {e:8.4f} {s:8.3f}")


if __name__ == "__main__":
    main()
