#!/usr/bin/env python3
"""
Command-line entry point for the liner optimization pipeline.

    liner.py --config run.ini --workers 4 --out results generate-snapshots
    liner.py --config run.ini build-pod
    liner.py --config run.ini validate
    liner.py --config run.ini optimize
    liner.py --config run.ini compare-fom-rom
"""

import argparse
import os
import sys
from typing import List, Optional

# Add parent directory to path to enable imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from liner_optimizer.commands import (
    cmd_build_pod,
    cmd_compare_fom_rom,
    cmd_generate_snapshots,
    cmd_optimize,
    cmd_validate,
)
from liner_optimizer.config import RunConfig, load_config
from liner_optimizer.display.utils import Colors
from liner_optimizer.errors import (
    ConfigError,
    ConvergenceError,
    MeshFormatError,
    MeshInvariantError,
    RankError,
    SampleSolveError,
    SingularSystemError,
)

COMMANDS = {
    "generate-snapshots": cmd_generate_snapshots,
    "build-pod": cmd_build_pod,
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "compare-fom-rom": cmd_compare_fom_rom,
}

DOMAIN_ERRORS = (
    ConvergenceError,
    MeshFormatError,
    MeshInvariantError,
    RankError,
    SampleSolveError,
    SingularSystemError,
    FileNotFoundError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Risk-averse acoustic liner optimization")
    parser.add_argument("--config", type=str, default=None, help="INI run configuration")
    parser.add_argument("--workers", type=int, default=1, help="Worker threads for sample solves")
    parser.add_argument("--out", type=str, default=None, help="Output directory (overrides [output])")
    parser.add_argument("--verbose", action="store_true", help="Print progress tables")
    parser.add_argument("command", choices=sorted(COMMANDS), help="Pipeline stage to run")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out:
        cfg = cfg.with_output(args.out)
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print(f"{Colors.RED}--workers must be at least 1{Colors.ENDC}")
        return 2

    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"{Colors.RED}Config error: {exc}{Colors.ENDC}")
        return 2

    try:
        COMMANDS[args.command](cfg, workers=args.workers, verbose=args.verbose)
    except DOMAIN_ERRORS as exc:
        print(f"{Colors.RED}{args.command} failed: {exc}{Colors.ENDC}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
