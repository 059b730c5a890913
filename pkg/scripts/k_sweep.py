"""RoI SSIM of the weighted prior over a range of k on the hole-defect scenario."""
import argparse
from pathlib import Path

from tomoprior.experiments import k_stability


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=float, nargs="+", default=[2, 5, 10, 20, 45, 90])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--views", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="keep weights maps and reconstructions here")
    args = ap.parse_args()

    r = k_stability(tuple(args.k), args.size, args.views, args.seed, args.out)
    for k, s in zip(r.k_values, r.roi_ssim):
        print(f"k = {k:>6g}  roi ssim {s:.4f}")
    print(f"spread {r.spread:.4f}, weights monotone in k: {r.monotone}")


if __name__ == "__main__":
    main()
