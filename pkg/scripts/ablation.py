"""Desk-scale fusion ablation: synthesize scenes, train late / early / no fusion
with identical seeds and batches, and print the metric table."""

import argparse
import logging
import sys
from pathlib import Path

from rgbd_inpaint import cli


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/ablation")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)
    code = cli.main(["gen-data", "--out", str(out / "data"), "--count", str(args.count),
                     "--size", str(args.size), "--seed", str(args.seed)])
    if code == 0:
        code = cli.main(["ablate", "--data", str(out / "data"), "--iters", str(args.iters),
                         "--batch", str(args.batch), "--base-channels", str(args.base_channels),
                         "--critic-channels", str(args.base_channels), "--seed", str(args.seed),
                         "--out", str(out / "table")])
    sys.exit(code)


if __name__ == "__main__":
    main()
