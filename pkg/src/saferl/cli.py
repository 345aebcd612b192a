"""``saferl`` command line: train, eval, compare, calibrate, elicit."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import calibration, harness

log = logging.getLogger("saferl")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--supervisor", choices=("on", "off"), help="enable the safety supervisor")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saferl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("train", help="train one agent"))

    p = sub.add_parser("eval", help="greedy rollouts of a checkpoint")
    _common(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--episodes", type=int, default=20)

    _common(sub.add_parser("compare", help="train with and without the supervisor"))

    p = sub.add_parser("calibrate", help="fit driver parameters to a decision CSV")
    _common(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--restarts", type=int, default=calibration.FitConfig.restarts)
    p.add_argument("--max-iterations", type=int, default=calibration.FitConfig.max_iterations)
    p.add_argument("--output", type=Path, help="fitted JSON (default <out>/driver_fit.json)")

    p = sub.add_parser("elicit", help="collect C/K answers to sampled scenarios")
    _common(p)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--output", type=Path, help="CSV path (default <out>/decisions.csv)")
    return parser


def resolve_config(args) -> harness.TrainConfig:
    cfg = harness.load_config(args.config) if args.config else harness.TrainConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.supervisor is not None:
        overrides["supervisor"] = args.supervisor == "on"
    if args.out is not None:
        overrides["out"] = args.out
    return replace(cfg, **overrides)


def run(args) -> None:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    if args.command == "train":
        art = harness.train(cfg)
        print(f"{len(art.episodes)} epochs, {art.collisions} collisions; artifacts in {art.out_dir}")
    elif args.command == "eval":
        s = harness.evaluate(args.checkpoint, cfg, args.episodes)
        print(
            f"episodes {s.episodes}  mean {s.mean_return:.2f}  std {s.std_return:.2f}  "
            f"min {s.min_return:.2f}  max {s.max_return:.2f}  collisions {s.collisions}"
        )
    elif args.command == "compare":
        harness.compare(cfg)
    elif args.command == "calibrate":
        fit_cfg = calibration.FitConfig(seed=cfg.seed, restarts=args.restarts, max_iterations=args.max_iterations)
        harness.calibrate(args.dataset, fit_cfg, args.output or out / "driver_fit.json")
    elif args.command == "elicit":
        path = args.output or out / "decisions.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        n = harness.elicit(args.count, cfg.seed, path)
        print(f"wrote {n} decisions to {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        run(args)
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"saferl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0
