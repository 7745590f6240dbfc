"""Dense/sparse gradient vectors, top-k selection, and the sparse merge operator.

Dense gradients are plain 1-D float32 numpy arrays. Sparse gradients carry
(index, value) pairs with strictly increasing uint64 indices. Selection and
merging never perform arithmetic on kept values, so dense == selected +
residual holds bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FLOAT = np.float32
INDEX = np.uint64


def as_dense(values) -> np.ndarray:
    """Coerce input to a 1-D float32 gradient vector."""
    arr = np.asarray(values, dtype=FLOAT)
    if arr.ndim != 1:
        raise ValueError(f"dense vector must be 1-D, got shape {arr.shape}")
    return arr


def k_from_density(rho: float, m: int) -> int:
    """Number of entries to keep for density rho: round to nearest, floor 1."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"density must be in (0, 1], got {rho}")
    return max(1, min(m, round(rho * m)))


@dataclass(eq=False)
class SparseVector:
    """Sparse gradient: nnz (index, value) pairs over a dense dimension.

    Indices are strictly increasing uint64, all < dim; values are float32.
    """

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=INDEX)
        self.values = np.asarray(self.values, dtype=FLOAT)

    @classmethod
    def empty(cls, dim: int) -> "SparseVector":
        return cls(dim, np.empty(0, dtype=INDEX), np.empty(0, dtype=FLOAT))

    @classmethod
    def from_pairs(cls, dim: int, pairs) -> "SparseVector":
        """Build from (index, value) pairs in any order."""
        if not pairs:
            return cls.empty(dim)
        pairs = sorted(pairs)
        idx = np.array([p[0] for p in pairs], dtype=INDEX)
        val = np.array([p[1] for p in pairs], dtype=FLOAT)
        return cls(dim, idx, val)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def to_pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def validate(self) -> None:
        if len(self.indices) != len(self.values):
            raise ValueError("index/value length mismatch")
        if len(self.indices) > 0:
            if not np.all(self.indices[:-1] < self.indices[1:]):
                raise ValueError("indices must be strictly increasing")
            if int(self.indices[-1]) >= self.dim:
                raise ValueError("index out of range")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"SparseVector(dim={self.dim}, entries={self.to_pairs()})"


@dataclass(eq=False)
class IndexMask:
    """A {0,1} selection over a dense dimension, stored as a bool array."""

    dim: int
    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool)
        if self.flags.shape != (self.dim,):
            raise ValueError("mask flags must have shape (dim,)")

    @classmethod
    def from_indices(cls, dim: int, indices) -> "IndexMask":
        flags = np.zeros(dim, dtype=bool)
        idx = np.asarray(indices, dtype=INDEX)
        if len(idx) and int(idx.max()) >= dim:
            raise ValueError("mask index out of range")
        flags[idx] = True
        return cls(dim, flags)

    @property
    def indices(self) -> np.ndarray:
        return np.nonzero(self.flags)[0].astype(INDEX)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def __invert__(self) -> "IndexMask":
        return IndexMask(self.dim, ~self.flags)

    def __and__(self, other: "IndexMask") -> "IndexMask":
        if self.dim != other.dim:
            raise ValueError("mask dimension mismatch")
        return IndexMask(self.dim, self.flags & other.flags)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexMask):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.flags, other.flags)


def top_k_select(g, k: int) -> tuple[SparseVector, np.ndarray]:
    """Split g into its k largest-magnitude entries and the zeroed residual.

    Ties in magnitude are broken toward the smaller index, so exactly k
    entries are always selected. Kept values are copied bitwise; the residual
    holds g everywhere else, so densify(selected) + residual == g exactly.
    """
    g = as_dense(g)
    m = g.size
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    if not np.isfinite(g).all():
        raise FloatingPointError("non-finite values in dense input")
    # Stable sort on descending magnitude keeps the lower index first on ties.
    order = np.argsort(-np.abs(g), kind="stable")
    keep = np.sort(order[:k]).astype(INDEX)
    selected = SparseVector(m, keep, g[keep].copy())
    residual = g.copy()
    residual[keep] = FLOAT(0)
    return selected, residual


def top_op(a: SparseVector, b: SparseVector, k: int) -> SparseVector:
    """Merge two sparse vectors: sum elementwise, keep the k largest by |value|.

    Exact zeros produced by cancellation are dropped, so the result has
    min(k, nonzeros-of-sum) entries. Magnitude ties break toward the smaller
    index. Addition order on shared indices is a-then-b.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if a.nnz == 0 and b.nnz == 0:
        return SparseVector.empty(a.dim)

    common, ia, ib = np.intersect1d(
        a.indices, b.indices, assume_unique=True, return_indices=True
    )
    a_only = np.ones(a.nnz, dtype=bool)
    a_only[ia] = False
    b_only = np.ones(b.nnz, dtype=bool)
    b_only[ib] = False

    cand_idx = np.concatenate([common, a.indices[a_only], b.indices[b_only]])
    cand_val = np.concatenate(
        [a.values[ia] + b.values[ib], a.values[a_only], b.values[b_only]]
    ).astype(FLOAT)

    nonzero = cand_val != 0
    cand_idx = cand_idx[nonzero]
    cand_val = cand_val[nonzero]

    if len(cand_idx) > k:
        # lexsort: primary key is descending magnitude, secondary ascending index
        pick = np.lexsort((cand_idx, -np.abs(cand_val)))[:k]
        cand_idx = cand_idx[pick]
        cand_val = cand_val[pick]

    order = np.argsort(cand_idx)
    return SparseVector(a.dim, cand_idx[order], cand_val[order])


def densify(s: SparseVector) -> np.ndarray:
    """Dense float32 vector with s's values at s's indices, zeros elsewhere."""
    out = np.zeros(s.dim, dtype=FLOAT)
    out[s.indices] = s.values
    return out


def masked_extract(g, keep: IndexMask) -> np.ndarray:
    """Elementwise product of g with the {0,1} mask (values copied, not scaled)."""
    g = as_dense(g)
    if g.size != keep.dim:
        raise ValueError(f"dimension mismatch: {g.size} != {keep.dim}")
    return np.where(keep.flags, g, FLOAT(0))
