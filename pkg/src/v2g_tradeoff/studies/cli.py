"""Command-line entry point: ``v2g-tradeoff <study> [--config F] [--out D] [--seed N] [--threads N]``."""

from __future__ import annotations

import argparse
import sys

from .config import STUDIES, ConfigError, load_config, validate_config
from .runners import StudyError, max_violation, run_study


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2g-tradeoff",
        description="V2G revenue vs battery degradation trade-off studies.",
        epilog="Config keys can be overridden with V2GT_<KEY>[__<SUBKEY>] environment variables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STUDIES + ("validate",):
        p = sub.add_parser(name, help="check a configuration" if name == "validate" else f"run the {name} study")
        p.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed (non-negative)")
        p.add_argument("--threads", type=int, help="worker processes for independent scenario cells")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("out", "seed", "threads") if getattr(args, k) is not None}

    if args.command == "validate":
        problems = validate_config(args.config, overrides)
        if problems:
            for p in problems:
                print(p, file=sys.stderr)
            return 2
        print("configuration OK")
        return 0

    try:
        cfg = load_config(args.config, overrides)
        result = run_study(cfg, args.command)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (StudyError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in result.files:
        print(path)
    worst = max_violation(result)
    if worst > 1e-6:
        print(f"error: a schedule violates the session constraints by {worst:.3g}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
