"""Command-line experiment runner.

Subcommands map one-to-one onto experiment kinds; a flat key=value config
file provides defaults that individual flags override.  Exit codes: 0 on
success, 1 for configuration problems, 2 for runtime or numerical failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    EXPERIMENT_KINDS,
    config_from_mapping,
    parse_config_text,
    run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamalloc-experiments",
        description="Run streaming-allocation experiments and write CSV results.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", type=Path, help="flat key=value config file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="base RNG seed")
        p.add_argument("--theta", type=float, help="cost-family exponent")
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("--T", type=int, help="epochs per run")
        p.add_argument("--replications", type=int, help="replications per cell")
        p.add_argument("--n", type=str, help="comma-separated user counts")
        p.add_argument("--h", type=str, help="comma-separated ON probabilities")
        p.add_argument("--w", type=int, help="exploration rounds per user")
        p.add_argument("--r", type=int, help="phase-index base")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        mapping: dict = {}
        if args.config is not None:
            mapping.update(parse_config_text(args.config.read_text()))
        for key, attr in (
            ("out", "out"),
            ("seed", "seed"),
            ("theta", "theta"),
            ("jobs", "jobs"),
            ("T", "T"),
            ("replications", "replications"),
            ("n", "n"),
            ("h", "h"),
            ("w", "w"),
            ("r", "r"),
        ):
            value = getattr(args, attr, None)
            if value is not None:
                mapping[key] = str(value)
        cfg = config_from_mapping(args.kind, mapping)
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        results = run_experiment(cfg)
    except (ArithmeticError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    print(results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
