"""Command-line entry point for the experiment harness.

Subcommands mirror the experiments: ior-validate, ber-sweep, ce-compare and
channel-response.  Each accepts --config (JSON), --seed, --out and
--full-scale, writes CSV results plus a run.json echoing the resolved
configuration, and exits nonzero when a validated invariant fails.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (ExperimentConfig, default_config, run_ber_sweep,
                      run_ce_compare, run_channel_response, run_ior_validate)

_RUNNERS = {
    "ior-validate": run_ior_validate,
    "ber-sweep": run_ber_sweep,
    "ce-compare": run_ce_compare,
    "channel-response": run_channel_response,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpotfs",
        description="CP-OTFS delay-Doppler link-level experiments")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in _RUNNERS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", metavar="PATH",
                       help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", default="results",
                       help="output directory (default: results/)")
        p.add_argument("--full-scale", action="store_true",
                       help="use the 128x128 configuration instead of desk scale")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config:
        ec = ExperimentConfig.from_json(args.config)
        ec.kind = args.kind
    else:
        ec = default_config(args.kind, full_scale=args.full_scale)
    if args.seed is not None:
        ec.seed = args.seed
    result = _RUNNERS[args.kind](ec, out_dir=args.out)
    summary = result["summary"]
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    if summary.get("ok") is False:
        print("invariant violated", file=sys.stderr)
        return 1
    print(f"results written to {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
