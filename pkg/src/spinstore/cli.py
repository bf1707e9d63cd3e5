"""Command line entry point: ``spinstore run <config> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import load_config
from .errors import ConfigError, ResourceGuardError, SpinStoreError
from .runner import emit_report, run_experiment, verify_system

log = logging.getLogger("spinstore")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinstore", description="Dynamical spin-state storage experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", help="path to the experiment configuration")
    run.add_argument("--format", choices=("csv", "json"), action="append", dest="formats",
                     help="report format; repeat for both (default: [output] formats)")
    run.add_argument("--out", help="output directory (default: [output] dir)")
    run.add_argument("--seed", type=int, help="seed for randomized initial states (default: [output] seed)")
    run.add_argument("--verify", action="store_true",
                     help="check the algebraic invariants of the configured system first")
    run.add_argument("--timings", action="store_true", help="include wall-clock timings in the JSON report")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None and args.seed < 0:
        raise ConfigError("seed must be nonnegative", "seed")
    if args.verify:
        checks = verify_system(config)
        failed = [c for c in checks if not c["passed"]]
        for c in checks:
            log.info("verify %-45s %.3e  %s", c["name"], c["value"], "ok" if c["passed"] else "FAIL")
        if failed:
            for c in failed:
                print(f"verify failed: {c['name']} = {c['value']:.3e} (tolerance {c['tolerance']:.0e})",
                      file=sys.stderr)
            return 3
    report = run_experiment(config, seed=args.seed)
    out_dir = args.out if args.out is not None else config.output["dir"]
    formats = args.formats or config.output["formats"]
    for fmt in dict.fromkeys(formats):
        path = emit_report(report, fmt, out_dir, include_timings=args.timings)
        print(path)
    for note in report.notes:
        log.warning(note)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 4
    except (SpinStoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
