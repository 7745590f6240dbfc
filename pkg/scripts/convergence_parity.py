#!/usr/bin/env python3
"""Desk-scale convergence comparison of the three S-SGD variants.

Trains dense, top-k, and global top-k on the same synthetic least-squares
problem (4 workers, in-process) and prints the final losses side by side,
then repeats on logistic classification with accuracies.
"""

import argparse

from gtopk import models
from gtopk.cli import RunConfig, run_training


def least_squares(seed: int, iters: int) -> None:
    ds = models.gen_dataset("least-squares", 1024, 64, seed=seed, c=4)
    eta = 0.025 / models.gram_lipschitz(ds.inputs)
    print(f"least-squares m=256 P=4 b=16 rho=0.01 lr={eta:.5f} iters={iters}")
    for algo in ("dense", "topk", "gtopk", "gtopk-naive"):
        rc = RunConfig(
            algo=algo, P=4, model="least-squares", d=64, m=256, n=1024, b=16,
            iters=iters, rho=0.01, seed=seed, lr=eta, log_timings=False,
        )
        s = run_training(rc).summary
        div = s["divergence_rate"] or "-"
        print(f"  {algo:12s} final_loss={s['final_loss']:>12s} divergence={div}")


def logistic(seed: int, iters: int) -> None:
    print(f"logistic d=64 P=4 b=16 rho=0.01 lr=0.5 iters={iters}")
    for algo in ("dense", "topk", "gtopk"):
        rc = RunConfig(
            algo=algo, P=4, model="logistic", d=64, n=1024, b=16,
            iters=iters, rho=0.01, seed=seed, lr=0.5, log_timings=False,
        )
        s = run_training(rc).summary
        print(f"  {algo:12s} accuracy={s['accuracy']} final_loss={s['final_loss']}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--iters", type=int, default=2000)
    args = ap.parse_args()
    least_squares(args.seed, args.iters)
    logistic(args.seed, args.iters)
