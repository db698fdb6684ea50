"""Command-line entry point: ``cyclewarp <command> [--config F] [--seed S] ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from .commands import COMMANDS
from .config import RunConfig
from .errors import ConfigError, NumericalError

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2

_HELP = {
    "simulate": "simulate signals with known parameters and growth paths",
    "fit": "fit every segment of an input CSV",
    "bootstrap": "residual bootstrap for every fitted segment",
    "aggregate": "glue fitted segments into a dated timeline with an age estimate",
    "bench": "simulation-study replication; prints the within-1-cycle rate",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cyclewarp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in _HELP.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int,
                       help="worker cap (default: $CYCLEWARP_THREADS, else 1)")
        p.add_argument("--out", help="output directory")
        if name == "fit":
            p.add_argument("--input", help="CSV with header x,y or segment,x,y")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig().validate()
    return cfg.override(seed=args.seed, threads=args.threads, out=args.out,
                        input=getattr(args, "input", None))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
