#!/usr/bin/env python3
"""Measure the in-process collectives across worker counts and sizes.

Prints one stats row per (collective, rank) for each configuration; use
--out to collect everything into a single CSV instead.
"""

import argparse
import sys

from gtopk.cli import BENCH_HEADER, RunConfig, run_bench


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--workers", type=str, default="2,4,8")
    ap.add_argument("--sizes", type=str, default="1e4,1e5,1e6")
    ap.add_argument("--rho", type=float, default=0.001)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--out", type=str, default=None)
    args = ap.parse_args()

    lines = [BENCH_HEADER]
    for P in (int(x) for x in args.workers.split(",")):
        for m in (int(float(x)) for x in args.sizes.split(",")):
            cfg = RunConfig(P=P, m=m, rho=args.rho, repeats=args.repeats)
            lines.extend(run_bench(cfg))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
