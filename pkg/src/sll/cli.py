"""Command-line entry point.

    sll <experiment> --config <path> [--seed N] [--out DIR]

Exit codes: 0 all checks passed, 1 a check failed (or a run aborted),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .harness import run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sll",
        description="Numerical laboratory for a singularly perturbed stochastic "
                    "sine-Gordon system with a random dynamical boundary condition.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize other codes
        return 2 if exc.code not in (0,) else 0

    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out,
                                 experiment=args.experiment)
        cfg.validate()
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        result = run_experiment(cfg)
    except Exception as exc:  # blow-up, solver fault: a failed check, not usage
        print(f"run failed: {exc}", file=sys.stderr)
        return 1

    status = "PASS" if result.passed else "FAIL"
    print(f"[{status}] {cfg.experiment} -> {cfg.out_dir} ({', '.join(result.files)})")
    for key in sorted(result.report):
        if key.startswith("pass_") or key == "pass":
            print(f"  {key}: {result.report[key]}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
