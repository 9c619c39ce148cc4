"""Command-line front end: ``hormlab <subcommand> --config FILE``.

Exit codes: 0 pass, 1 the mathematical condition fails, 2 config error,
3 internal-consistency alarm, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import flows, hormander, runs, spectral

SUBCOMMANDS = {
    "check-hormander": ("four Hoermander criteria, proof-chain checks and rank search", runs.run_check_hormander),
    "bch": ("corrected flow-product defects and their fitted order", runs.run_bch),
    "flow": ("group law, inverse and Taylor-remainder checks for one field", runs.run_flow),
    "holder": ("Hoelder-norm comparison ratios across grids", runs.run_holder),
    "subell": ("subellipticity refinement sweeps, order scan and rank cross-check", runs.run_subell),
    "report": ("every run whose section is present in the config", runs.run_report),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hormlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, _) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="INI config file")
        p.add_argument("--out", type=Path, help="output directory (default: stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
        p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def render(result: runs.RunResult, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result.payload, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.header)
    writer.writerows(result.rows)
    return buf.getvalue()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return runs.EXIT_CONFIG
    runner = SUBCOMMANDS[args.command][1]
    try:
        cfg = runs.load_config(args.config, args.seed)
        result = runner(cfg, args.jobs)
    except (runs.ConfigError, hormander.CapExceeded, spectral.CapExceeded) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return runs.EXIT_CONFIG
    except (flows.IntegrationError, spectral.SpectralError, hormander.LPFailure,
            ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return runs.EXIT_NUMERICAL
    except ValueError as exc:  # e.g. non-periodic fields on a torus grid
        print(f"config error: {exc}", file=sys.stderr)
        return runs.EXIT_CONFIG
    text = render(result, args.format)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{result.command}.{args.format}").write_text(text)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
