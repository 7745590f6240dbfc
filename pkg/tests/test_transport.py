import threading
import time

import numpy as np
import pytest

from gtopk import collectives
from gtopk.sparse import SparseVector
from gtopk.transport import (
    ClusterConfig,
    ProtocolError,
    TransportError,
    connect_tcp_cluster,
    create_local_cluster,
    decode_sparse,
    encode_sparse,
    load_hosts_file,
    run_workers,
)

from conftest import free_ports, random_sparse


class TestSerialization:
    def test_empty_is_12_bytes(self):
        assert len(encode_sparse(SparseVector.empty(4))) == 12

    def test_single_entry_is_24_bytes(self):
        s = SparseVector.from_pairs(4, [(1, 2.0)])
        assert len(encode_sparse(s)) == 24

    def test_roundtrip_fuzz(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            m = int(rng.integers(1, 300))
            k = int(rng.integers(1, m + 1))
            s = random_sparse(rng, m, k)
            assert decode_sparse(encode_sparse(s), m) == s

    def test_bad_magic(self):
        buf = bytearray(encode_sparse(SparseVector.empty(4)))
        buf[0] ^= 0xFF
        with pytest.raises(ProtocolError):
            decode_sparse(bytes(buf), 4)

    def test_truncated(self):
        buf = encode_sparse(SparseVector.from_pairs(4, [(1, 2.0)]))
        with pytest.raises(ProtocolError):
            decode_sparse(buf[:-1], 4)
        with pytest.raises(ProtocolError):
            decode_sparse(buf[:6], 4)

    def test_non_ascending_indices(self):
        a = encode_sparse(SparseVector.from_pairs(8, [(1, 1.0), (2, 2.0)]))
        # swap the two 8-byte index fields
        swapped = a[:12] + a[20:28] + a[12:20] + a[28:]
        with pytest.raises(ProtocolError):
            decode_sparse(swapped, 8)

    def test_index_out_of_range(self):
        buf = encode_sparse(SparseVector.from_pairs(8, [(7, 1.0)]))
        with pytest.raises(ProtocolError):
            decode_sparse(buf, 4)


class TestLocalCluster:
    def test_invalid_worker_count(self):
        with pytest.raises(ValueError):
            create_local_cluster(0)

    def test_single_endpoint_rejects_self_send(self):
        (ep,) = create_local_cluster(1)
        with pytest.raises(ValueError):
            ep.send(0, 0, b"x")

    def test_echo_roundtrip(self):
        eps = create_local_cluster(4)

        def worker(ep):
            if ep.rank == 1:
                ep.send(2, 7, b"payload-from-1")
            if ep.rank == 2:
                return ep.recv(1, 7)
            return None

        assert run_workers(eps, worker)[2] == b"payload-from-1"

    def test_empty_payload(self):
        eps = create_local_cluster(2)

        def worker(ep):
            if ep.rank == 0:
                ep.send(1, 3, b"")
            else:
                return ep.recv(0, 3)

        assert run_workers(eps, worker)[1] == b""

    def test_fifo_per_tag(self):
        eps = create_local_cluster(2)

        def worker(ep):
            if ep.rank == 0:
                for i in range(20):
                    ep.send(1, 7, bytes([i]))
            else:
                return [ep.recv(0, 7)[0] for _ in range(20)]

        assert run_workers(eps, worker)[1] == list(range(20))

    def test_random_payload_roundtrips(self):
        rng = np.random.default_rng(4)
        payloads = [rng.bytes(int(rng.integers(0, 4096))) for _ in range(200)]
        eps = create_local_cluster(2)

        def worker(ep):
            if ep.rank == 0:
                for i, p in enumerate(payloads):
                    ep.send(1, i % 5, p)
            else:
                return [ep.recv(0, i % 5) for i in range(len(payloads))]

        got = run_workers(eps, worker)[1]
        # per-tag FIFO: interleave by tag matches send order per tag
        by_tag_sent = {t: [p for i, p in enumerate(payloads) if i % 5 == t] for t in range(5)}
        by_tag_got = {t: [] for t in range(5)}
        for i, p in enumerate(got):
            by_tag_got[i % 5].append(p)
        assert by_tag_sent == by_tag_got

    def test_pairwise_isolation(self):
        eps = create_local_cluster(4)

        def worker(ep):
            peers = [r for r in range(4) if r != ep.rank]
            for p in peers:
                ep.send(p, 1, f"{ep.rank}->{p}".encode())
            return sorted(ep.recv(p, 1).decode() for p in peers)

        outs = run_workers(eps, worker)
        for r, got in enumerate(outs):
            assert got == sorted(f"{p}->{r}" for p in range(4) if p != r)

    def test_thirty_two_workers(self):
        eps = create_local_cluster(32)

        def worker(ep):
            ep.barrier()
            return ep.rank

        assert run_workers(eps, worker) == list(range(32))

    def test_recv_timeout(self):
        eps = create_local_cluster(2, timeout=0.3)

        def worker(ep):
            if ep.rank == 0:
                with pytest.raises(TransportError):
                    ep.recv(1, 9)
            return True

        assert all(run_workers(eps, worker))


class TestBarrier:
    def test_single_rank_returns(self):
        (ep,) = create_local_cluster(1)
        ep.barrier()

    def test_staggered_entry(self):
        eps = create_local_cluster(4)
        entered = []
        lock = threading.Lock()

        def worker(ep):
            time.sleep(0.02 * ep.rank)
            with lock:
                entered.append(ep.rank)
            ep.barrier()
            with lock:
                return len(entered)

        outs = run_workers(eps, worker)
        # nobody left the barrier before all four entered
        assert all(count == 4 for count in outs)

    def test_message_rounds_p8(self):
        eps = create_local_cluster(8)

        def worker(ep):
            before = ep.stats.snapshot()
            ep.barrier()
            return ep.stats.snapshot().delta(before)

        for delta in run_workers(eps, worker):
            assert delta.msgs_sent == 3
            assert delta.msgs_recv == 3


class TestTcpCluster:
    def test_two_rank_smoke(self):
        ports = free_ports(2)
        cfg = ClusterConfig(2, "tcp", [("127.0.0.1", p) for p in ports], timeout=10)
        results = {}

        def node(rank):
            ep = connect_tcp_cluster(cfg, rank)
            try:
                if rank == 0:
                    ep.send(1, 5, b"hello over tcp")
                    results[0] = ep.recv(1, 6)
                else:
                    results[1] = ep.recv(0, 5)
                    ep.send(0, 6, b"reply")
                ep.barrier()
            finally:
                ep.close()

        threads = [threading.Thread(target=node, args=(r,)) for r in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == {0: b"reply", 1: b"hello over tcp"}

    def test_timeout_names_missing_rank(self):
        ports = free_ports(2)
        cfg = ClusterConfig(2, "tcp", [("127.0.0.1", p) for p in ports], timeout=0.5)
        with pytest.raises(TransportError, match="rank"):
            connect_tcp_cluster(cfg, 0)  # rank 1 never shows up

    def test_duplicate_announcement(self):
        import socket as socket_mod
        import struct

        ports = free_ports(3)
        cfg = ClusterConfig(3, "tcp", [("127.0.0.1", p) for p in ports], timeout=5)
        err = {}

        def node0():
            try:
                connect_tcp_cluster(cfg, 0)
            except Exception as exc:  # noqa: BLE001
                err["exc"] = exc

        t = threading.Thread(target=node0)
        t.start()
        time.sleep(0.2)
        for _ in range(2):  # two different sockets both claim rank 1
            s = socket_mod.create_connection(("127.0.0.1", ports[0]), timeout=5)
            s.sendall(struct.pack("<I", 1))
        t.join(timeout=10)
        assert isinstance(err.get("exc"), ProtocolError)

    def test_backend_equivalence_bitwise(self):
        # identical inputs through local and tcp backends give identical bytes
        # for every collective
        rng = np.random.default_rng(21)
        P, m, k = 3, 24, 3
        sparse_in = [random_sparse(rng, m, k) for _ in range(P)]
        dense_in = [rng.standard_normal(m).astype(np.float32) for _ in range(P)]

        def all_collectives(ep, rank):
            return (
                collectives.gtopk_allreduce(ep, sparse_in[rank], k, P),
                collectives.topk_allreduce(ep, sparse_in[rank], P),
                collectives.dense_ring_allreduce(ep, dense_in[rank]),
            )

        local = run_workers(
            create_local_cluster(P), lambda ep: all_collectives(ep, ep.rank)
        )

        ports = free_ports(P)
        cfg = ClusterConfig(P, "tcp", [("127.0.0.1", p) for p in ports], timeout=10)
        tcp_out = {}

        def node(rank):
            ep = connect_tcp_cluster(cfg, rank)
            try:
                tcp_out[rank] = all_collectives(ep, rank)
                ep.barrier()
            finally:
                ep.close()

        threads = [threading.Thread(target=node, args=(r,)) for r in range(P)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for r in range(P):
            gtopk_t, topk_t, dense_t = tcp_out[r]
            gtopk_l, topk_l, dense_l = local[r]
            assert gtopk_t.global_topk == gtopk_l.global_topk
            assert gtopk_t.global_mask == gtopk_l.global_mask
            assert np.array_equal(topk_t, topk_l)
            assert np.array_equal(dense_t, dense_l)


class TestHostsFile:
    def test_parse(self, tmp_path):
        f = tmp_path / "hosts"
        f.write_text("0 10.0.0.1 9000\n1 10.0.0.2 9001\n# comment\n", encoding="utf-8")
        assert load_hosts_file(f) == [("10.0.0.1", 9000), ("10.0.0.2", 9001)]

    def test_duplicate_rank_rejected(self, tmp_path):
        f = tmp_path / "hosts"
        f.write_text("0 a 1\n0 b 2\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_hosts_file(f)

    def test_gap_rejected(self, tmp_path):
        f = tmp_path / "hosts"
        f.write_text("0 a 1\n2 b 2\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_hosts_file(f)
