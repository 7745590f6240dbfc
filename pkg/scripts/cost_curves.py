#!/usr/bin/env python3
"""Emit the predicted-time comparison tables for the three collectives.

Writes two CSVs next to this script unless --outdir is given:
  cost_vs_workers.csv   sweep P in 4..128 at m=25e6, rho=0.001
  cost_vs_size.csv      sweep m at P=32, rho=0.001
"""

import argparse
from pathlib import Path

from gtopk.cli import main as gtopk_main


def run(outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    gtopk_main([
        "cost-model", "--preset", "paper-1gbe", "--sweep", "P",
        "--values", "4,8,16,32,64,128", "--m", "25e6", "--rho", "0.001",
        "--out", str(outdir / "cost_vs_workers.csv"),
    ])
    gtopk_main([
        "cost-model", "--preset", "paper-1gbe", "--sweep", "m",
        "--values", "1e5,1e6,1e7,2.5e7,1e8", "--P", "32", "--rho", "0.001",
        "--out", str(outdir / "cost_vs_size.csv"),
    ])
    print(f"wrote {outdir / 'cost_vs_workers.csv'}")
    print(f"wrote {outdir / 'cost_vs_size.csv'}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--outdir", type=Path, default=Path(__file__).parent / "out")
    run(ap.parse_args().outdir)
