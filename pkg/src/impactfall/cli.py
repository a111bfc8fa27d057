"""Command-line entry point: one subcommand per pipeline stage plus ``run-all``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config, with_overrides
from .errors import ConfigError, DataError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

COMMANDS = [*pipeline.STAGES, "run-all"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impactfall", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run-all" else "run every stage in order")
        p.add_argument("--config", required=True, help="pipeline config (YAML or JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--beta", type=float, help="impact threshold in g")
        p.add_argument("--models", help="comma-separated model list, e.g. svm,rf,gboost")
        p.add_argument("--k", type=int, help="number of top-ranked features to keep")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threshold-sweep", action="store_true", default=None,
                       help="pick each model's decision threshold on the validation split")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        models = [m.strip() for m in args.models.split(",") if m.strip()] if args.models else None
        cfg = with_overrides(cfg, seed=args.seed, beta=args.beta, models=models, k=args.k, out=args.out,
                             threshold_sweep=args.threshold_sweep)
    except ConfigError as exc:
        print(f"impactfall: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        if args.command == "run-all":
            pipeline.run_all(cfg)
            print(pipeline.report(cfg), end="")
        else:
            result = pipeline.run_stage(args.command, cfg)
            if isinstance(result, str):
                print(result, end="")
    except pipeline.StageError as exc:
        print(f"impactfall: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc.cause, (ConfigError, DataError)) else EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
