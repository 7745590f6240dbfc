"""Gradient aggregation collectives over rank/tag transport endpoints.

Three aggregation paths:

* dense_ring_allreduce: reduce-scatter + allgather rings, 2(P-1) steps.
* topk_allreduce: ring allgather of the P sparse gradients, then a dense
  rank-order accumulation divided by P.
* gtopk_allreduce: recursive-halving merge tree. At round j every surviving
  pair (r, r + 2^(j-1)) combines accumulators with the sparse top-k merge,
  received-then-own; after ceil(log2 P) rounds rank 0 holds the fold and
  broadcasts it down a binomial tree. No averaging is applied; callers own
  the scaling policy.

All collectives are collective calls: every rank must invoke the same
operation with compatible arguments, and collectives never overlap on one
endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import FLOAT, IndexMask, SparseVector, as_dense, top_op
from .transport import Endpoint, ProtocolError, decode_sparse, encode_sparse

# Tag bases; each collective round gets its own tag for unambiguous matching.
_TAG_RING_RS = 0x1000
_TAG_RING_AG = 0x2000
_TAG_GATHER = 0x3000
_TAG_GTOPK = 0x4000
_TAG_BCAST = 0x5000


def ceil_log2(P: int) -> int:
    return (P - 1).bit_length() if P > 1 else 0


@dataclass
class CollectiveStats:
    """Per-rank accounting for one collective invocation."""

    collective: str
    P: int
    m: int
    k: int
    rank: int
    bytes_sent: int
    bytes_recv: int
    msgs: int
    rounds: int
    wall_ms: float

    CSV_HEADER = "collective,P,m,k,rank,bytes_sent,bytes_recv,msgs,rounds,wall_ms"

    def csv_row(self) -> str:
        return (
            f"{self.collective},{self.P},{self.m},{self.k},{self.rank},"
            f"{self.bytes_sent},{self.bytes_recv},{self.msgs},{self.rounds},"
            f"{self.wall_ms:.6f}"
        )


@dataclass
class GTopKResult:
    """Globally selected sparse gradient and its index mask; identical on all ranks."""

    global_topk: SparseVector
    global_mask: IndexMask


def comm_rounds(collective: str, P: int) -> int:
    """Communication round count per rank for each collective."""
    if P == 1:
        return 0
    if collective == "dense":
        return 2 * (P - 1)
    if collective in ("topk", "allgather"):
        return P - 1
    if collective == "gtopk":
        return 2 * ceil_log2(P)
    if collective == "bcast":
        return ceil_log2(P)
    raise ValueError(f"unknown collective {collective!r}")


def dense_ring_allreduce(ep: Endpoint, g) -> np.ndarray:
    """Elementwise sum over all ranks via reduce-scatter + allgather rings.

    Returns the sum (not the average). Vectors shorter than P are padded
    internally with zeros; ranks passing mismatched dims trip a protocol
    error when chunk sizes disagree.
    """
    g = as_dense(g)
    P = ep.world_size
    if P == 1:
        return g.copy()

    m = g.size
    chunk = -(-m // P)  # ceil division
    buf = np.zeros(chunk * P, dtype=FLOAT)
    buf[:m] = g
    right = (ep.rank + 1) % P
    left = (ep.rank - 1) % P

    def piece(c: int) -> np.ndarray:
        return buf[c * chunk : (c + 1) * chunk]

    def exchange(tag: int, send_c: int) -> np.ndarray:
        ep.send(right, tag, piece(send_c).tobytes())
        raw = ep.recv(left, tag)
        if len(raw) != chunk * 4:
            raise ProtocolError(
                f"ring chunk size mismatch: got {len(raw)} bytes, "
                f"expected {chunk * 4}"
            )
        return np.frombuffer(raw, dtype=FLOAT)

    for step in range(P - 1):
        recv_c = (ep.rank - step - 1) % P
        incoming = exchange(_TAG_RING_RS + step, (ep.rank - step) % P)
        piece(recv_c)[:] = piece(recv_c) + incoming
    for step in range(P - 1):
        recv_c = (ep.rank - step) % P
        incoming = exchange(_TAG_RING_AG + step, (ep.rank - step + 1) % P)
        piece(recv_c)[:] = incoming
    return buf[:m].copy()


def allgather(ep: Endpoint, payload: bytes) -> list[bytes]:
    """Every rank receives all P payloads, indexed by source rank (ring pass)."""
    P = ep.world_size
    blocks: list[bytes | None] = [None] * P
    blocks[ep.rank] = bytes(payload)
    if P == 1:
        return [blocks[ep.rank]]
    right = (ep.rank + 1) % P
    left = (ep.rank - 1) % P
    for step in range(P - 1):
        send_c = (ep.rank - step) % P
        recv_c = (ep.rank - step - 1) % P
        ep.send(right, _TAG_GATHER + step, blocks[send_c])
        blocks[recv_c] = ep.recv(left, _TAG_GATHER + step)
    return blocks


def topk_allreduce(ep: Endpoint, local: SparseVector, P: int | None = None) -> np.ndarray:
    """Dense average of all ranks' sparse gradients via allgather.

    Accumulation is in rank order 0..P-1 so the result is bitwise
    reproducible and matches a densify-sum-divide oracle exactly.
    """
    P = ep.world_size if P is None else P
    if P != ep.world_size:
        raise ValueError("P must match the cluster size")
    parts = allgather(ep, encode_sparse(local))
    acc = np.zeros(local.dim, dtype=FLOAT)
    for part in parts:
        s = decode_sparse(part, local.dim)
        if s.dim != local.dim:
            raise ProtocolError("sparse dim mismatch in topk_allreduce")
        acc[s.indices] += s.values
    acc /= FLOAT(P)
    return acc


def binomial_bcast(ep: Endpoint, root: int, payload: bytes | None) -> bytes:
    """Broadcast root's payload to all ranks in ceil(log2 P) rounds."""
    P = ep.world_size
    rel = (ep.rank - root) % P
    if rel == 0 and payload is None:
        raise ValueError("root must supply the payload")
    if P == 1:
        return bytes(payload)
    buf = bytes(payload) if rel == 0 else b""
    for j in range(1, ceil_log2(P) + 1):
        half = 1 << (j - 1)
        if rel < half:
            partner = rel + half
            if partner < P:
                ep.send((partner + root) % P, _TAG_BCAST + j, buf)
        elif rel < 2 * half:
            buf = ep.recv((rel - half + root) % P, _TAG_BCAST + j)
    return buf


def gtopk_allreduce(
    ep: Endpoint, local: SparseVector, k: int, P: int | None = None
) -> GTopKResult:
    """Tree-merge the P local top-k gradients into one global top-k.

    Round j pairs rank r (r mod 2^j == 2^(j-1)) with rank r - 2^(j-1): the
    former sends its accumulator, the latter replaces its own with
    top_op(received, own, k). Ranks without an in-range partner skip the
    round. Rank 0 ends holding the full fold and broadcasts it; every rank
    returns an identical GTopKResult. Values are NOT divided by P.
    """
    P = ep.world_size if P is None else P
    if P != ep.world_size:
        raise ValueError("P must match the cluster size")
    if local.nnz > k:
        raise ValueError(f"local sparse vector has {local.nnz} entries, k={k}")

    acc = local
    for j in range(1, ceil_log2(P) + 1):
        half = 1 << (j - 1)
        span = 1 << j
        r = ep.rank
        if r % span == half:
            ep.send(r - half, _TAG_GTOPK + j, encode_sparse(acc))
        elif r % span == 0 and r + half < P:
            received = decode_sparse(ep.recv(r + half, _TAG_GTOPK + j), acc.dim)
            acc = top_op(received, acc, k)

    payload = encode_sparse(acc) if ep.rank == 0 else None
    data = binomial_bcast(ep, 0, payload)
    merged = decode_sparse(data, local.dim)
    return GTopKResult(merged, IndexMask.from_indices(local.dim, merged.indices))


def predicted_bytes(collective: str, P: int, m: int, k: int) -> int:
    """Bytes one rank sends for a collective, from the algorithm structure."""
    if P == 1:
        return 0
    sparse_msg = 12 + 12 * k  # encode_sparse layout
    if collective == "dense":
        chunk = -(-m // P)
        return 2 * (P - 1) * chunk * 4
    if collective == "topk":
        return (P - 1) * sparse_msg
    if collective == "gtopk":
        raise ValueError("gtopk send volume is rank dependent; use endpoint stats")
    raise ValueError(f"unknown collective {collective!r}")
