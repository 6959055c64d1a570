"""Command line entry point.

    fracwalk <experiment> --config <path> [--out <dir>] [--seed <u64>] [--strict]

Exit status: 0 when every assertion passes, 1 on an assertion failure or a
numerical error during the run, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError, FracwalkError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracwalk", description="Run a fracwalk study and check its assertions.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p.add_argument("--seed", type=_u64, help="master seed (overrides the config seed)")
    p.add_argument("--strict", action="store_true",
                   help="turn numerical diagnostics (e.g. clipped negative density mass) into errors")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors, which matches EXIT_CONFIG
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config, args.seed)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"experiment: config is for {cfg.experiment!r}, command line asked for {args.experiment!r}")
        result = run_experiment(cfg, args.out, args.strict)
    except ConfigError as exc:
        print(f"fracwalk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FracwalkError as exc:
        print(f"fracwalk: run failed in {exc}", file=sys.stderr)
        return EXIT_FAIL
    for a in result.assertions:
        tag = "PASS" if a["passed"] else "FAIL"
        print(f"[{tag}] criterion {a['criterion']}: {a['name']}: measured {a['measured']!r} (threshold {a['threshold']!r})")
    print(f"outputs: {result.out_dir}")
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
