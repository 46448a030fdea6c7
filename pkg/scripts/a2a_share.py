"""All-to-all share of step time under the analytic model, and the implied speedup.

Prints the share for a grid of server counts and hidden sizes, then the step
speedup for a few compression ratios at each share.

    python scripts/a2a_share.py --peak-flops 125e12 --utilization 0.5 --inter-gbps 100
"""

import argparse
from dataclasses import replace

from lshmoe.cost_model import CostParams, SpeedupParams, a2a_share, predict_speedup


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--peak-flops", type=float, default=125e12)
    ap.add_argument("--utilization", type=float, default=0.5)
    ap.add_argument("--inter-gbps", type=float, default=100.0)
    ap.add_argument("--intra-gbps", type=float, default=1200.0)
    ap.add_argument("--k", type=int, default=2)
    args = ap.parse_args()

    p = CostParams.from_bytes(
        n=4096, k=args.k, h=768, l=12, w=2,
        bandwidth_intra_bytes=args.intra_gbps * 1e9 / 8,
        bandwidth_inter_bytes=args.inter_gbps * 1e9 / 8,
        peak_flops=args.peak_flops, utilization=args.utilization)

    hs = (512, 768, 1024, 2048)
    print("share  " + " ".join(f"h={h:<6}" for h in hs))
    for w in (2, 4, 8, 16, 32):
        print(f"w={w:<4} " + " ".join(f"{a2a_share(replace(p, w=w, h=h)):8.3f}" for h in hs))

    print("\nspeedup at compression ratio r (no clustering overhead)")
    ratios = (0.1, 0.117, 0.2, 0.5)
    print("share  " + " ".join(f"r={r:<6}" for r in ratios))
    for s in (0.3, 0.45, 0.7):
        print(f"{s:<6} " + " ".join(f"{predict_speedup(SpeedupParams(s, r)):8.3f}" for r in ratios))


if __name__ == "__main__":
    main()
