"""View-escalation protocol on the needle scenario, written to an output directory.

    python3 scripts/run_protocol.py --config configs/needle.cfg --out runs/needle
"""
import argparse
import sys

from tomoprior.config import build_config, load_config
from tomoprior.pipeline import run_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/protocol")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    kw = dict(out_dir=args.out, seed=args.seed)
    cfg = load_config(args.config, **kw) if args.config else build_config({}, **kw)
    rep = run_protocol(cfg)
    sys.stdout.write(rep.summary())
    for stage, sec in rep.timing.items():
        print(f"  {stage:<32} {sec:6.1f}s")
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
