"""Train SafeRL and ConvRL on shared seeds and print the collision table.

Usage: python scripts/run_comparison.py [--epochs 200] [--seed 0] [--out runs/compare]
"""
import argparse
import csv
import logging
from pathlib import Path

from saferl.harness import TrainConfig, compare


def eval_curve(path: Path) -> str:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return "  ".join(f"{r['epoch']}:{float(r['mean_return']):.0f}" for r in rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/compare")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rows = compare(TrainConfig(epochs=args.epochs, seed=args.seed, out=args.out))
    print()
    for r in rows:
        print(f"{r.arm:<7} eval returns  {eval_curve(r.artifacts.eval_csv)}")


if __name__ == "__main__":
    main()
