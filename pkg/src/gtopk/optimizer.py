"""Synchronous SGD step variants: dense, top-k, and global top-k.

Every step is a collective: all P workers call the same variant in lock
step, and afterwards hold bitwise-identical weights. Residual bookkeeping
follows the sparsified schemes exactly:

* top-k: the local gradient accumulates into the residual, the k largest
  entries are shipped, the rest stay local.
* global top-k: additionally, locally selected entries whose indices miss
  the global mask are returned to the residual ("extra residuals").
  Contributions pruned inside the merge tree at indices that still land in
  the global mask are lost; the optional diagnostics report that lost mass.

Aggregated updates are averaged (scale 1/P) by default; set
update_scaling="sum" on the state to apply the raw merged gradient.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .collectives import (
    allgather,
    dense_ring_allreduce,
    gtopk_allreduce,
    topk_allreduce,
)
from .sparse import FLOAT, IndexMask, SparseVector, as_dense, densify, top_k_select
from .transport import Endpoint, decode_sparse, encode_sparse

DEFAULT_WARMUP = (0.25, 0.0725, 0.015, 0.004)
DEFAULT_TERMINAL_DENSITY = 0.001


@dataclass(frozen=True)
class DensitySchedule:
    """Warmup densities for the first epochs, then a constant terminal density."""

    warmup: tuple[float, ...] = DEFAULT_WARMUP
    terminal: float = DEFAULT_TERMINAL_DENSITY


def density_at(schedule: DensitySchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < len(schedule.warmup):
        return schedule.warmup[epoch]
    return schedule.terminal


@dataclass
class OptimizerState:
    weights: np.ndarray
    residual: np.ndarray
    lr: float
    iteration: int = 0
    momentum: float = 0.0
    update_scaling: str = "average"  # "average" applies 1/P, "sum" applies 1
    schedule: DensitySchedule = field(default_factory=DensitySchedule)
    velocity: np.ndarray | None = None

    def __post_init__(self):
        self.weights = as_dense(self.weights)
        self.residual = as_dense(self.residual)
        if self.residual.size != self.weights.size:
            raise ValueError("residual dim must match weights dim")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.update_scaling not in ("average", "sum"):
            raise ValueError(f"unknown update scaling {self.update_scaling!r}")


def make_state(weights, lr: float, **kwargs) -> OptimizerState:
    w = as_dense(weights).copy()
    return OptimizerState(w, np.zeros_like(w), lr, **kwargs)


@dataclass
class StepReport:
    loss: float = 0.0
    t_compute_ms: float = 0.0
    t_compress_ms: float = 0.0
    t_communicate_ms: float = 0.0
    selected_k: int = 0
    lost_mass: float = 0.0
    divergence: float | None = None


def _apply_update(state: OptimizerState, update: np.ndarray) -> None:
    if state.momentum > 0.0:
        if state.velocity is None:
            state.velocity = np.zeros_like(state.weights)
        state.velocity = FLOAT(state.momentum) * state.velocity + update
        update = state.velocity
    state.weights -= FLOAT(state.lr) * update
    state.iteration += 1


def _scaled(state: OptimizerState, merged: np.ndarray, P: int) -> np.ndarray:
    if state.update_scaling == "average":
        return merged / FLOAT(P)
    return merged


def _rank_order_dense_sum(ep: Endpoint, g: np.ndarray) -> np.ndarray:
    # Oracle-order aggregation: allgather and accumulate by rank, matching
    # topk_allreduce's summation order so k=m trajectories compare bitwise.
    parts = allgather(ep, np.ascontiguousarray(g, dtype="<f4").tobytes())
    acc = np.zeros_like(g)
    for part in parts:
        acc = acc + np.frombuffer(part, dtype="<f4")
    return acc


def dense_step(
    state: OptimizerState,
    ep: Endpoint,
    grad,
    P: int,
    *,
    loss: float = 0.0,
    t_compute_ms: float = 0.0,
    rank_order_sum: bool = False,
) -> StepReport:
    """Classic S-SGD: average the dense gradients, apply one identical update."""
    g = as_dense(grad)
    t0 = time.perf_counter()
    if rank_order_sum:
        total = _rank_order_dense_sum(ep, g)
    else:
        total = dense_ring_allreduce(ep, g)
    t_comm = (time.perf_counter() - t0) * 1e3
    _apply_update(state, total / FLOAT(P))
    return StepReport(
        loss=loss,
        t_compute_ms=t_compute_ms,
        t_communicate_ms=t_comm,
        selected_k=g.size,
    )


def topk_step(
    state: OptimizerState,
    ep: Endpoint,
    grad,
    k: int,
    P: int,
    *,
    loss: float = 0.0,
    t_compute_ms: float = 0.0,
) -> StepReport:
    """Top-k sparsified S-SGD with residual accumulation."""
    g = as_dense(grad)
    t0 = time.perf_counter()
    accumulated = state.residual + g
    selected, state.residual = top_k_select(accumulated, k)
    t_compress = (time.perf_counter() - t0) * 1e3

    t1 = time.perf_counter()
    averaged = topk_allreduce(ep, selected, P)
    t_comm = (time.perf_counter() - t1) * 1e3

    _apply_update(state, averaged)
    return StepReport(
        loss=loss,
        t_compute_ms=t_compute_ms,
        t_compress_ms=t_compress,
        t_communicate_ms=t_comm,
        selected_k=selected.nnz,
    )


def _reference_sum(ep: Endpoint, selected: SparseVector) -> np.ndarray:
    # Unscaled rank-order sum of everyone's selection; diagnostic only.
    parts = allgather(ep, encode_sparse(selected))
    total = np.zeros(selected.dim, dtype=FLOAT)
    for part in parts:
        s = decode_sparse(part, selected.dim)
        total[s.indices] += s.values
    return total


def _naive_global_select(total: np.ndarray, k: int) -> SparseVector:
    picked, _ = top_k_select(total, k)
    nonzero = picked.values != 0
    return SparseVector(picked.dim, picked.indices[nonzero], picked.values[nonzero])


def _mask_divergence(a: SparseVector, b: SparseVector) -> float:
    """1 - |shared indices| / max entry count; 0 when the masks agree."""
    sa, sb = set(a.indices.tolist()), set(b.indices.tolist())
    denom = max(len(sa), len(sb), 1)
    return 1.0 - len(sa & sb) / denom


def gtopk_step(
    state: OptimizerState,
    ep: Endpoint,
    grad,
    k: int,
    P: int,
    *,
    loss: float = 0.0,
    t_compute_ms: float = 0.0,
    measure_divergence: bool = False,
) -> StepReport:
    """Global top-k S-SGD: tree-merged selection plus extra-residual bookkeeping.

    With measure_divergence the step additionally computes the reference
    (allgather) global selection on the same inputs, reporting the mask
    divergence and the gradient mass lost to mid-tree pruning. The reference
    pass never influences the weight trajectory.
    """
    g = as_dense(grad)
    t0 = time.perf_counter()
    accumulated = state.residual + g
    selected, residual_after = top_k_select(accumulated, k)
    t_compress = (time.perf_counter() - t0) * 1e3

    t1 = time.perf_counter()
    result = gtopk_allreduce(ep, selected, k, P)
    t_comm = (time.perf_counter() - t1) * 1e3

    # Extra residuals: locally selected entries outside the global mask.
    outside = ~result.global_mask.flags[selected.indices]
    residual_after[selected.indices[outside]] += selected.values[outside]
    state.residual = residual_after

    lost_mass = 0.0
    divergence = None
    if measure_divergence:
        total = _reference_sum(ep, selected)
        naive = _naive_global_select(total, k)
        divergence = _mask_divergence(result.global_topk, naive)
        pruned = np.where(result.global_mask.flags, total, FLOAT(0)) - densify(
            result.global_topk
        )
        lost_mass = float(np.abs(pruned).sum())

    _apply_update(state, _scaled(state, densify(result.global_topk), P))
    return StepReport(
        loss=loss,
        t_compute_ms=t_compute_ms,
        t_compress_ms=t_compress,
        t_communicate_ms=t_comm,
        selected_k=result.global_topk.nnz,
        lost_mass=lost_mass,
        divergence=divergence,
    )


def gtopk_naive_step(
    state: OptimizerState,
    ep: Endpoint,
    grad,
    k: int,
    P: int,
    *,
    loss: float = 0.0,
    t_compute_ms: float = 0.0,
    measure_divergence: bool = False,
) -> StepReport:
    """Reference global top-k: select from the true aggregated sum (allgather).

    Serves as the oracle the tree variant is compared against; nothing is
    pruned mid-merge, so its lost mass is exactly zero.
    """
    g = as_dense(grad)
    t0 = time.perf_counter()
    accumulated = state.residual + g
    selected, residual_after = top_k_select(accumulated, k)
    t_compress = (time.perf_counter() - t0) * 1e3

    t1 = time.perf_counter()
    averaged = topk_allreduce(ep, selected, P)
    t_comm = (time.perf_counter() - t1) * 1e3

    global_sel = _naive_global_select(averaged, k)
    gmask = IndexMask.from_indices(global_sel.dim, global_sel.indices)

    outside = ~gmask.flags[selected.indices]
    residual_after[selected.indices[outside]] += selected.values[outside]
    state.residual = residual_after

    divergence = None
    if measure_divergence:
        tree = gtopk_allreduce(ep, selected, k, P)
        divergence = _mask_divergence(tree.global_topk, global_sel)

    # averaged already carries the 1/P factor; undo it for "sum" scaling.
    update = densify(global_sel)
    if state.update_scaling == "sum":
        update = update * FLOAT(P)
    _apply_update(state, update)
    return StepReport(
        loss=loss,
        t_compute_ms=t_compute_ms,
        t_compress_ms=t_compress,
        t_communicate_ms=t_comm,
        selected_k=global_sel.nnz,
        lost_mass=0.0,
        divergence=divergence,
    )


STEP_FNS = {
    "dense": dense_step,
    "topk": topk_step,
    "gtopk": gtopk_step,
    "gtopk-naive": gtopk_naive_step,
}
