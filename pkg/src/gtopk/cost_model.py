"""Closed-form latency/bandwidth time models and point-to-point fitting.

Communication time is modeled as alpha (per-message startup, ms) plus beta
(per-element transfer, ms) terms:

    dense ring allreduce   2(P-1) a + 2((P-1)/P) m b
    sparse allgather       log2(P) a + 2(P-1) k b
    sparse tree merge      2 log2(P) a + 4 k log2(P) b

All logs are base 2; every model is defined as 0 at P=1. The allgather
latency term prices a recursive-doubling gather; the shipped collective uses
a ring (same volume, P-1 rounds), so measured round counts differ from the
model's latency term by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sparse import k_from_density

PRESETS = {
    # Measured 1GbE point-to-point constants used throughout the comparisons.
    "paper-1gbe": (0.436, 3.6e-5),
}

ALGORITHMS = ("dense", "topk", "gtopk")


@dataclass(frozen=True)
class CostParams:
    alpha: float  # per-message latency, ms
    beta: float  # per-element transfer time, ms
    P: int
    m: int
    rho: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")

    @property
    def k(self) -> int:
        return k_from_density(self.rho, self.m)


def t_dense(p: CostParams) -> float:
    if p.P == 1:
        return 0.0
    return 2 * (p.P - 1) * p.alpha + 2 * ((p.P - 1) / p.P) * p.m * p.beta


def t_topk(p: CostParams) -> float:
    if p.P == 1:
        return 0.0
    return math.log2(p.P) * p.alpha + 2 * (p.P - 1) * p.k * p.beta


def t_gtopk(p: CostParams) -> float:
    if p.P == 1:
        return 0.0
    return 2 * p.alpha * math.log2(p.P) + 4 * p.k * p.beta * math.log2(p.P)


MODEL_FNS = {"dense": t_dense, "topk": t_topk, "gtopk": t_gtopk}


def scaling_efficiency(t_f: float, t_b: float, t_c: float) -> float:
    """Compute-time fraction (t_f + t_b) / (t_f + t_b + t_c)."""
    if t_f < 0 or t_b < 0 or t_c < 0:
        raise ValueError("times must be non-negative")
    if t_f + t_b <= 0:
        raise ValueError("compute time must be positive")
    return (t_f + t_b) / (t_f + t_b + t_c)


@dataclass(frozen=True)
class FitResult:
    alpha: float
    beta: float
    rss: float
    n_samples: int


def fit_alpha_beta(samples) -> FitResult:
    """Least-squares line time = alpha + beta * size over (size, ms) samples.

    alpha is clipped at zero; a single distinct size is a degenerate fit.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    sizes = np.array([s for s, _ in samples], dtype=np.float64)
    times = np.array([t for _, t in samples], dtype=np.float64)
    if np.all(sizes == sizes[0]):
        raise ValueError("degenerate fit: all sample sizes equal")
    var = np.var(sizes)
    beta = float(np.mean((sizes - sizes.mean()) * (times - times.mean())) / var)
    alpha = max(0.0, float(times.mean() - beta * sizes.mean()))
    residuals = times - (alpha + beta * sizes)
    return FitResult(alpha, beta, float(residuals @ residuals), len(samples))


def curve_rows(
    alpha: float,
    beta: float,
    m: int,
    rho: float,
    P_values,
    algorithms=ALGORITHMS,
) -> list[dict]:
    """Predicted-time table rows sweeping P at fixed m and rho."""
    rows = []
    for P in P_values:
        p = CostParams(alpha, beta, int(P), m, rho)
        for algo in algorithms:
            rows.append(
                {
                    "algorithm": algo,
                    "P": int(P),
                    "m": m,
                    "rho": rho,
                    "predicted_ms": MODEL_FNS[algo](p),
                }
            )
    return rows


def size_sweep_rows(
    alpha: float,
    beta: float,
    P: int,
    rho: float,
    m_values,
    algorithms=ALGORITHMS,
) -> list[dict]:
    """Predicted-time table rows sweeping m at fixed P and rho."""
    rows = []
    for m in m_values:
        p = CostParams(alpha, beta, P, int(m), rho)
        for algo in algorithms:
            rows.append(
                {
                    "algorithm": algo,
                    "P": P,
                    "m": int(m),
                    "rho": rho,
                    "predicted_ms": MODEL_FNS[algo](p),
                }
            )
    return rows
