"""Rank-addressed message passing with in-process and TCP backends.

Both backends expose the same endpoint interface: blocking point-to-point
send/recv matched on (source, tag), FIFO per (source, dest, tag) channel,
plus a dissemination barrier built on top. The TCP backend frames every
message as

    magic 0x6754524E | source rank | tag | payload length | payload

with 4-byte little-endian header fields. Sparse vectors travel in their own
bit-exact layout (see encode_sparse).
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .sparse import FLOAT, INDEX, SparseVector

log = logging.getLogger("gtopk.transport")

FRAME_MAGIC = 0x6754524E
SPARSE_MAGIC = 0x67544B31

_FRAME_HEADER = struct.Struct("<IIII")
_SPARSE_HEADER = struct.Struct("<IQ")
_MAX_PAYLOAD = 2**32 - 1

# Internal tag namespace; user collectives stay below this.
BARRIER_TAG = 0x7FFF0000

DEFAULT_TIMEOUT = 30.0


class TransportError(Exception):
    """Connection failure, timeout, or aborted cluster."""


class ProtocolError(Exception):
    """Malformed frame, bad magic, or handshake violation."""


# ---------------------------------------------------------------------------
# sparse vector serialization
# ---------------------------------------------------------------------------


def encode_sparse(s: SparseVector) -> bytes:
    """Serialize: magic | count u64 | indices u64[] | values f32[], little-endian."""
    header = _SPARSE_HEADER.pack(SPARSE_MAGIC, s.nnz)
    idx = np.ascontiguousarray(s.indices, dtype="<u8").tobytes()
    val = np.ascontiguousarray(s.values, dtype="<f4").tobytes()
    return header + idx + val


def decode_sparse(buf: bytes, dim: int) -> SparseVector:
    """Inverse of encode_sparse; validates layout, ordering, and index range."""
    if len(buf) < _SPARSE_HEADER.size:
        raise ProtocolError(f"sparse buffer truncated: {len(buf)} bytes")
    magic, n = _SPARSE_HEADER.unpack_from(buf, 0)
    if magic != SPARSE_MAGIC:
        raise ProtocolError(f"bad sparse magic 0x{magic:08X}")
    expect = _SPARSE_HEADER.size + 12 * n
    if len(buf) != expect:
        raise ProtocolError(f"sparse buffer length {len(buf)}, expected {expect}")
    off = _SPARSE_HEADER.size
    indices = np.frombuffer(buf, dtype="<u8", count=n, offset=off).astype(INDEX)
    values = np.frombuffer(buf, dtype="<f4", count=n, offset=off + 8 * n).astype(FLOAT)
    if n > 0:
        if not np.all(indices[:-1] < indices[1:]):
            raise ProtocolError("sparse indices not strictly ascending")
        if int(indices[-1]) >= dim:
            raise ProtocolError(f"sparse index {int(indices[-1])} >= dim {dim}")
    return SparseVector(dim, indices, values)


# ---------------------------------------------------------------------------
# cluster configuration
# ---------------------------------------------------------------------------


@dataclass
class ClusterConfig:
    """Worker count plus backend selection; TCP needs one host:port per rank."""

    P: int
    backend: str = "local"  # "local" (in-process) or "tcp"
    addresses: list[tuple[str, int]] = field(default_factory=list)
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.P < 1:
            raise ValueError(f"P must be >= 1, got {self.P}")
        if self.backend not in ("local", "tcp"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "tcp" and len(self.addresses) != self.P:
            raise ValueError(
                f"tcp backend needs {self.P} addresses, got {len(self.addresses)}"
            )


def load_hosts_file(path) -> list[tuple[str, int]]:
    """Parse a hosts file: one 'rank host port' line per rank, LF-terminated."""
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'rank host port'")
            rank, host, port = int(parts[0]), parts[1], int(parts[2])
            if rank in entries:
                raise ValueError(f"{path}:{lineno}: duplicate rank {rank}")
            entries[rank] = (host, port)
    if sorted(entries) != list(range(len(entries))):
        raise ValueError(f"{path}: ranks must be 0..P-1 without gaps")
    return [entries[r] for r in range(len(entries))]


# ---------------------------------------------------------------------------
# endpoints
# ---------------------------------------------------------------------------


@dataclass
class TransportStats:
    bytes_sent: int = 0
    bytes_recv: int = 0
    msgs_sent: int = 0
    msgs_recv: int = 0

    def snapshot(self) -> "TransportStats":
        return TransportStats(
            self.bytes_sent, self.bytes_recv, self.msgs_sent, self.msgs_recv
        )

    def delta(self, earlier: "TransportStats") -> "TransportStats":
        return TransportStats(
            self.bytes_sent - earlier.bytes_sent,
            self.bytes_recv - earlier.bytes_recv,
            self.msgs_sent - earlier.msgs_sent,
            self.msgs_recv - earlier.msgs_recv,
        )


class Endpoint:
    """One rank's handle to the cluster; owned by exactly one worker task."""

    def __init__(self, rank: int, world_size: int, timeout: float = DEFAULT_TIMEOUT):
        self.rank = rank
        self.world_size = world_size
        self.timeout = timeout
        self.stats = TransportStats()

    # -- point to point ------------------------------------------------

    def send(self, dest: int, tag: int, payload: bytes) -> None:
        self._check_peer(dest)
        self._check_tag(tag)
        if len(payload) > _MAX_PAYLOAD:
            raise ValueError("payload too large")
        self._send_impl(dest, tag, bytes(payload))
        self.stats.msgs_sent += 1
        self.stats.bytes_sent += len(payload)

    def recv(self, source: int, tag: int) -> bytes:
        self._check_peer(source)
        self._check_tag(tag)
        payload = self._recv_impl(source, tag)
        self.stats.msgs_recv += 1
        self.stats.bytes_recv += len(payload)
        return payload

    def _check_peer(self, other: int) -> None:
        if other == self.rank:
            raise ValueError("send/recv to self is not allowed")
        if not 0 <= other < self.world_size:
            raise ValueError(f"rank {other} out of range [0, {self.world_size})")

    @staticmethod
    def _check_tag(tag: int) -> None:
        if not 0 <= tag < 2**32:
            raise ValueError(f"tag must fit in 32 bits, got {tag}")

    # -- barrier ---------------------------------------------------------

    def barrier(self) -> None:
        """Dissemination barrier: ceil(log2 P) rounds of pairwise messages."""
        P = self.world_size
        if P == 1:
            return
        rounds = (P - 1).bit_length()
        for r in range(rounds):
            step = 1 << r
            self.send((self.rank + step) % P, BARRIER_TAG + r, b"")
            self.recv((self.rank - step) % P, BARRIER_TAG + r)

    # -- lifecycle ---------------------------------------------------------

    def abort(self) -> None:
        """Wake any blocked recv with a TransportError; used on worker failure."""

    def close(self) -> None:
        pass

    def _send_impl(self, dest: int, tag: int, payload: bytes) -> None:
        raise NotImplementedError

    def _recv_impl(self, source: int, tag: int) -> bytes:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# in-process backend
# ---------------------------------------------------------------------------


class _LocalRouter:
    """FIFO queues shared by all endpoints of one simulated cluster."""

    def __init__(self, P: int):
        self.P = P
        self._queues: dict[tuple[int, int, int], queue.SimpleQueue] = {}
        self._lock = threading.Lock()
        self.aborted = False

    def channel(self, src: int, dst: int, tag: int) -> queue.SimpleQueue:
        key = (src, dst, tag)
        with self._lock:
            q = self._queues.get(key)
            if q is None:
                q = queue.SimpleQueue()
                self._queues[key] = q
            return q

    def abort(self) -> None:
        self.aborted = True


class LocalEndpoint(Endpoint):
    def __init__(self, rank, world_size, router: _LocalRouter, timeout):
        super().__init__(rank, world_size, timeout)
        self._router = router

    def _send_impl(self, dest, tag, payload):
        if self._router.aborted:
            raise TransportError("cluster aborted")
        self._router.channel(self.rank, dest, tag).put(payload)

    def _recv_impl(self, source, tag):
        q = self._router.channel(source, self.rank, tag)
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError(
                    f"rank {self.rank}: recv from {source} tag {tag} timed out"
                )
            try:
                return q.get(timeout=min(0.1, remaining))
            except queue.Empty:
                if self._router.aborted:
                    raise TransportError("cluster aborted") from None

    def abort(self):
        self._router.abort()


def create_local_cluster(P: int, timeout: float = DEFAULT_TIMEOUT) -> list[Endpoint]:
    """P mutually connected in-process endpoints for a simulated cluster."""
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    router = _LocalRouter(P)
    return [LocalEndpoint(r, P, router, timeout) for r in range(P)]


# ---------------------------------------------------------------------------
# TCP backend
# ---------------------------------------------------------------------------


class _PeerReader(threading.Thread):
    """Drains one peer socket, dispatching framed messages by (source, tag)."""

    def __init__(self, endpoint: "TcpEndpoint", peer_rank: int, sock: socket.socket):
        super().__init__(daemon=True, name=f"gtopk-rx-{endpoint.rank}<-{peer_rank}")
        self.ep = endpoint
        self.peer = peer_rank
        self.sock = sock

    def run(self):
        try:
            while True:
                header = self._read_exact(_FRAME_HEADER.size)
                if header is None:
                    self.ep._peer_closed(self.peer, "connection closed")
                    return
                magic, source, tag, length = _FRAME_HEADER.unpack(header)
                if magic != FRAME_MAGIC:
                    self.ep._peer_closed(self.peer, f"bad frame magic 0x{magic:08X}")
                    return
                if source != self.peer:
                    self.ep._peer_closed(
                        self.peer, f"frame claims source {source}, expected {self.peer}"
                    )
                    return
                payload = self._read_exact(length) if length else b""
                if payload is None:
                    self.ep._peer_closed(self.peer, "connection closed mid-frame")
                    return
                self.ep._dispatch(self.peer, tag, payload)
        except OSError as exc:
            self.ep._peer_closed(self.peer, str(exc))

    def _read_exact(self, n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf


_CLOSED = object()


class TcpEndpoint(Endpoint):
    def __init__(self, rank, world_size, sockets: dict[int, socket.socket], timeout):
        super().__init__(rank, world_size, timeout)
        self._socks = sockets
        self._send_locks = {r: threading.Lock() for r in sockets}
        self._inbox: dict[tuple[int, int], queue.SimpleQueue] = {}
        self._inbox_lock = threading.Lock()
        self._closed: dict[int, str] = {}
        self._aborted = False
        self._readers = [_PeerReader(self, r, s) for r, s in sockets.items()]
        for t in self._readers:
            t.start()

    def _queue_for(self, source: int, tag: int) -> queue.SimpleQueue:
        key = (source, tag)
        with self._inbox_lock:
            q = self._inbox.get(key)
            if q is None:
                q = queue.SimpleQueue()
                self._inbox[key] = q
            return q

    def _dispatch(self, source: int, tag: int, payload: bytes) -> None:
        self._queue_for(source, tag).put(payload)

    def _peer_closed(self, source: int, reason: str) -> None:
        with self._inbox_lock:
            self._closed[source] = reason
            queues = [q for (s, _), q in self._inbox.items() if s == source]
        for q in queues:
            q.put(_CLOSED)

    def _send_impl(self, dest, tag, payload):
        if self._aborted:
            raise TransportError("endpoint aborted")
        header = _FRAME_HEADER.pack(FRAME_MAGIC, self.rank, tag, len(payload))
        try:
            with self._send_locks[dest]:
                self._socks[dest].sendall(header + payload)
        except OSError as exc:
            raise TransportError(f"send to rank {dest} failed: {exc}") from exc

    def _recv_impl(self, source, tag):
        q = self._queue_for(source, tag)
        deadline = time.monotonic() + self.timeout
        while True:
            if self._aborted:
                raise TransportError("endpoint aborted")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError(
                    f"rank {self.rank}: recv from {source} tag {tag} timed out"
                )
            try:
                item = q.get(timeout=min(0.1, remaining))
            except queue.Empty:
                continue
            if item is _CLOSED:
                reason = self._closed.get(source, "closed")
                raise TransportError(f"connection to rank {source} lost: {reason}")
            return item

    def abort(self):
        self._aborted = True
        self.close()

    def close(self):
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass


def connect_tcp_cluster(cfg: ClusterConfig, my_rank: int) -> TcpEndpoint:
    """Establish the full mesh for one rank and return its endpoint.

    Every rank listens on its configured port, dials all lower ranks, and
    accepts from all higher ranks. Each dialer announces its rank as a 4-byte
    little-endian integer immediately after connecting. Returns once all P-1
    peers are connected; raises TransportError on timeout naming the missing
    ranks, ProtocolError on duplicate or invalid announcements.
    """
    if cfg.backend != "tcp":
        raise ValueError("connect_tcp_cluster requires a tcp ClusterConfig")
    if not 0 <= my_rank < cfg.P:
        raise ValueError(f"rank {my_rank} out of range [0, {cfg.P})")
    if cfg.P == 1:
        return TcpEndpoint(my_rank, 1, {}, cfg.timeout)

    deadline = time.monotonic() + cfg.timeout
    host, port = cfg.addresses[my_rank]
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen(cfg.P)

    socks: dict[int, socket.socket] = {}
    try:
        # Dial lower ranks, retrying until their listeners come up.
        for peer in range(my_rank):
            peer_host, peer_port = cfg.addresses[peer]
            while True:
                if time.monotonic() > deadline:
                    raise TransportError(
                        f"rank {my_rank}: timeout connecting to rank {peer} "
                        f"at {peer_host}:{peer_port}"
                    )
                try:
                    sock = socket.create_connection(
                        (peer_host, peer_port), timeout=1.0
                    )
                    break
                except OSError:
                    time.sleep(0.05)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(None)
            sock.sendall(struct.pack("<I", my_rank))
            socks[peer] = sock

        # Accept higher ranks; each announces itself first.
        expected = set(range(my_rank + 1, cfg.P))
        while expected:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                missing = ",".join(str(r) for r in sorted(expected))
                raise TransportError(
                    f"rank {my_rank}: timeout waiting for rank(s) {missing}"
                )
            listener.settimeout(min(1.0, remaining))
            try:
                sock, _ = listener.accept()
            except socket.timeout:
                continue
            sock.settimeout(min(5.0, cfg.timeout))
            raw = b""
            while len(raw) < 4:
                chunk = sock.recv(4 - len(raw))
                if not chunk:
                    raise ProtocolError("peer closed before rank announcement")
                raw += chunk
            (peer,) = struct.unpack("<I", raw)
            if peer in socks or peer == my_rank:
                raise ProtocolError(f"duplicate rank announcement: {peer}")
            if peer not in expected:
                raise ProtocolError(f"unexpected rank announcement: {peer}")
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(None)
            socks[peer] = sock
            expected.discard(peer)
    except BaseException:
        for sock in socks.values():
            sock.close()
        listener.close()
        raise
    listener.close()
    log.debug("rank %d: mesh complete, %d peers", my_rank, len(socks))
    return TcpEndpoint(my_rank, cfg.P, socks, cfg.timeout)


# ---------------------------------------------------------------------------
# worker harness
# ---------------------------------------------------------------------------


def run_workers(endpoints: list[Endpoint], fn) -> list:
    """Run fn(ep) on one thread per endpoint; return results indexed by rank.

    If any worker raises, the cluster is aborted (waking blocked peers) and
    the first failure is re-raised in rank order.
    """
    results = [None] * len(endpoints)
    failures: dict[int, BaseException] = {}
    lock = threading.Lock()

    def runner(i: int, ep: Endpoint):
        try:
            results[i] = fn(ep)
        except BaseException as exc:  # noqa: BLE001 - reported to caller
            with lock:
                failures[i] = exc
            for other in endpoints:
                other.abort()

    threads = [
        threading.Thread(target=runner, args=(i, ep), name=f"gtopk-worker-{i}")
        for i, ep in enumerate(endpoints)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        # prefer the root cause over TransportErrors induced by the abort
        primary = [r for r, e in failures.items() if not isinstance(e, TransportError)]
        rank = min(primary) if primary else min(failures)
        raise failures[rank]
    return results
