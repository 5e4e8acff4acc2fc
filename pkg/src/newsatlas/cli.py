"""Command-line front door: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, load_config
from .pipeline import STAGES, Pipeline, StageError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newsatlas",
        description="Neighbourhood topic profiles from geoparsed, clustered local news.",
    )
    parser.add_argument(
        "stage",
        choices=STAGES,
        help="pipeline stage to run (dependencies run automatically, cached)",
    )
    parser.add_argument("--config", required=True, help="TOML configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", default=None, help="override the configured output directory")
    parser.add_argument(
        "--single-thread",
        action="store_true",
        help="force the deterministic single-threaded mode (also the default)",
    )
    parser.add_argument(
        "--svg",
        action="store_true",
        help="emit per-location SVG pie charts in the profile stage",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=os.environ.get("NL_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        if args.seed < 0:
            print("error: --seed must be non-negative", file=sys.stderr)
            return 2
        config.sections["run"]["seed"] = args.seed
    if args.out is not None:
        config.sections["paths"]["output"] = args.out
    pipeline = Pipeline(config, svg=args.svg, single_thread=True)
    try:
        pipeline.run(args.stage)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
