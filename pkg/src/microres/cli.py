"""Command-line front end.

Thin dispatch over the harness: every subcommand reads one INI
configuration (except selftest, which is self-contained), runs, and
writes its reports into the output directory. Exit codes: 0 success,
2 configuration error, 3 solver failure, 4 failed self-test.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .cell import SolverError
from .cellmesh import MeshError
from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SELFTEST = 4

_COMMANDS = {
    "effective": "effective constants with closed-form and oracle cross-checks",
    "cell": "exterior cell problem: corrector solve and eps*",
    "homogenized": "homogenized slab scattering and field profile",
    "micro": "micro solve at every configured scale, with exports",
    "converge": "scale sweep against the shared homogenized reference",
    "diagnose": "per-scale solver health and constitutive residuals",
    "selftest": "built-in dual-route checks; needs no configuration",
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microres",
        description="Effective media and slab scattering for lattices of micro-resonators.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument(
        "--out", metavar="DIR", help="output directory (overrides [output] directory)"
    )
    common.add_argument(
        "--threads", type=int, default=1, metavar="N", help="worker threads for sweeps"
    )
    common.add_argument(
        "--deterministic",
        action="store_true",
        help="single-threaded sweeps with zeroed wall-time columns",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "selftest":
        ok, lines = harness.run_selftest()
        for line in lines:
            print(line)
        return EXIT_OK if ok else EXIT_SELFTEST
    if not args.config:
        raise ConfigError(f"the {args.command} command needs --config")
    cfg = load_config(args.config)
    out = args.out or cfg.out_dir
    if args.command == "effective":
        harness.run_effective(cfg, out)
    elif args.command == "cell":
        harness.run_cell(cfg, out)
    elif args.command == "homogenized":
        harness.run_homogenized(cfg, out)
    elif args.command == "micro":
        for n2 in sorted(cfg.n2_list):
            harness.run_micro(cfg, n2, out)
    elif args.command == "converge":
        harness.run_converge(
            cfg, out, threads=args.threads, deterministic=args.deterministic
        )
    elif args.command == "diagnose":
        harness.run_diagnose(cfg, out, threads=args.threads)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, MeshError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
