"""Global SSIM of FBP, CS-DCT and the unweighted prior across view counts.

    python3 scripts/few_view_ordering.py --views 10 12 15
"""
import argparse

from tomoprior.experiments import few_view_ordering


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--templates", type=int, default=6)
    ap.add_argument("--views", type=int, nargs="+", default=[10, 15])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'views':>5}  {'fbp':>6}  {'cs':>6}  {'prior':>6}")
    for v in args.views:
        r = few_view_ordering(args.size, args.templates, v, args.seed)
        print(f"{v:>5}  {r.fbp:6.3f}  {r.cs:6.3f}  {r.prior:6.3f}")


if __name__ == "__main__":
    main()
