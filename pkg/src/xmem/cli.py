"""Command line entry point: ``xmem run`` and ``xmem bounds``."""

from __future__ import annotations

import argparse
import sys

from .bounds import BoundInputs, describe
from .em_model import ConfigError
from .harness import ALGORITHMS, CSV_COLUMNS, DISTRIBUTIONS, VerificationError, run_experiment, write_csv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xmem", description="External-memory sorting experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one verified experiment")
    r.add_argument("--algo", choices=ALGORITHMS, required=True)
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--m", type=int, required=True)
    r.add_argument("--b", type=int, required=True)
    r.add_argument("--dist", choices=DISTRIBUTIONS, default="uniform")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--backend", choices=("sim", "file"), default="sim")
    r.add_argument("--budget", choices=("on", "off"), default="on")
    r.add_argument("--csv", help="append the report row to this CSV file")

    bd = sub.add_parser("bounds", help="print bound values for a configuration")
    bd.add_argument("--n", type=int, required=True)
    bd.add_argument("--m", type=int, required=True)
    bd.add_argument("--b", type=int, required=True)
    bd.add_argument("--avg-b", type=float, default=None)
    bd.add_argument("--eps", type=float, default=0.5)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            inputs = BoundInputs(args.n, args.m, args.b, args.avg_b)
            for key, val in describe(inputs, args.eps).items():
                print(f"{key}: {val}")
            return 0
        rep = run_experiment(args.algo, args.n, args.m, args.b, args.dist,
                             args.seed, args.backend, args.budget == "on")
    except VerificationError as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    row = rep.row()
    print(",".join(CSV_COLUMNS))
    print(",".join(str(row[c]) for c in CSV_COLUMNS))
    if args.csv:
        write_csv([rep], args.csv)
    return 0


if __name__ == "__main__":
    sys.exit(main())
