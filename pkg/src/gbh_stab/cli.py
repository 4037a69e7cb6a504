"""Command-line entry point: ``gbh-stab <subcommand> --config <path> --out <dir> [--seed <n>]``."""
from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .exceptions import GBHError
from .harness import KINDS, Scenario, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbh-stab",
        description="Boundary feedback stabilization of the Burgers-Huxley equation with memory.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        if kind == "validate":
            sp.add_argument("target", nargs="?", choices=("eigen", "lift", "all"), default="all")
        if kind == "compare":
            sp.add_argument("--nonlinear", action="store_true", help="compare the nonlinear loops")
        sp.add_argument("--config", required=True, help="INI file with [physics], [domain], [grid]")
        sp.add_argument("--out", required=True, help="output directory (created)")
        sp.add_argument("--seed", type=int, default=0, help="seed for random initial fields")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    scenario = Scenario(
        kind=args.kind,
        config=args.config,
        out=args.out,
        seed=args.seed,
        target=getattr(args, "target", "all"),
        nonlinear=getattr(args, "nonlinear", False),
    )
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            art = run_scenario(scenario)
    except (GBHError, ValueError) as exc:
        print(f"gbh-stab {args.kind}: error: {exc}", file=sys.stderr)
        return 2
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(art.report)
    return 0 if art.ok else 1


if __name__ == "__main__":
    sys.exit(main())
