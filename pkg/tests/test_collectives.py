import numpy as np
import pytest

from gtopk.collectives import (
    allgather,
    binomial_bcast,
    ceil_log2,
    dense_ring_allreduce,
    gtopk_allreduce,
    predicted_bytes,
    topk_allreduce,
)
from gtopk.sparse import FLOAT, SparseVector, densify
from gtopk.transport import ProtocolError, create_local_cluster, run_workers

from conftest import random_dense, random_sparse, tree_fold


def sv(dim, pairs):
    return SparseVector.from_pairs(dim, pairs)


class TestDenseRing:
    def test_single_rank_is_noop(self):
        (ep,) = create_local_cluster(1)
        g = np.array([1.0, -2.0], dtype=FLOAT)
        assert np.array_equal(dense_ring_allreduce(ep, g), g)

    def test_constant_vectors(self):
        eps = create_local_cluster(3)
        outs = run_workers(
            eps,
            lambda ep: dense_ring_allreduce(
                ep, np.full(6, ep.rank + 1.0, dtype=FLOAT)
            ),
        )
        for out in outs:
            assert np.array_equal(out, np.full(6, 6.0, dtype=FLOAT))

    def test_matches_sequential_sum(self):
        rng = np.random.default_rng(7)
        for m in (5, 16, 64, 257):
            ins = [random_dense(rng, m) for _ in range(4)]
            want = np.sum(np.stack(ins), axis=0, dtype=np.float64)
            outs = run_workers(
                create_local_cluster(4),
                lambda ep: dense_ring_allreduce(ep, ins[ep.rank]),
            )
            for out in outs:
                np.testing.assert_allclose(out, want, rtol=1e-4, atol=1e-5)

    def test_all_ranks_agree_bitwise(self):
        rng = np.random.default_rng(8)
        ins = [random_dense(rng, 33) for _ in range(5)]
        outs = run_workers(
            create_local_cluster(5), lambda ep: dense_ring_allreduce(ep, ins[ep.rank])
        )
        for out in outs[1:]:
            assert np.array_equal(out, outs[0])

    def test_dim_mismatch_detected(self):
        eps = create_local_cluster(2, timeout=5)
        dims = [8, 12]

        def worker(ep):
            return dense_ring_allreduce(ep, np.ones(dims[ep.rank], dtype=FLOAT))

        with pytest.raises(ProtocolError):
            run_workers(eps, worker)

    def test_sent_bytes_match_formula(self):
        rng = np.random.default_rng(9)
        for P, m in ((2, 10), (4, 64), (5, 33)):
            ins = [random_dense(rng, m) for _ in range(P)]

            def worker(ep):
                before = ep.stats.snapshot()
                dense_ring_allreduce(ep, ins[ep.rank])
                return ep.stats.snapshot().delta(before)

            for delta in run_workers(create_local_cluster(P), worker):
                assert delta.bytes_sent == predicted_bytes("dense", P, m, 0)
                assert delta.msgs_sent == 2 * (P - 1)


class TestAllgather:
    def test_single_rank(self):
        (ep,) = create_local_cluster(1)
        assert allgather(ep, b"solo") == [b"solo"]

    def test_distinct_strings_ordered(self):
        eps = create_local_cluster(4)
        outs = run_workers(eps, lambda ep: allgather(ep, f"from-{ep.rank}".encode()))
        want = [f"from-{r}".encode() for r in range(4)]
        assert all(out == want for out in outs)

    def test_variable_sizes(self):
        eps = create_local_cluster(3)
        outs = run_workers(eps, lambda ep: allgather(ep, b"x" * (ep.rank * 10)))
        assert all(out == [b"", b"x" * 10, b"x" * 20] for out in outs)

    def test_received_volume_matches_model(self):
        # each rank receives (P-1) payloads of 2k elements
        P, k = 8, 16
        payload = bytes(2 * k * 4)  # 2k four-byte elements

        def worker(ep):
            before = ep.stats.snapshot()
            allgather(ep, payload)
            return ep.stats.snapshot().delta(before)

        for delta in run_workers(create_local_cluster(P), worker):
            assert delta.bytes_recv == (P - 1) * 2 * k * 4


class TestTopKAllReduce:
    def test_single_rank(self):
        (ep,) = create_local_cluster(1)
        local = sv(4, [(1, 3.0)])
        assert np.array_equal(topk_allreduce(ep, local, 1), densify(local))

    def test_same_index_average(self):
        eps = create_local_cluster(2)
        ins = [sv(4, [(0, 1.0)]), sv(4, [(0, 3.0)])]
        outs = run_workers(eps, lambda ep: topk_allreduce(ep, ins[ep.rank], 2))
        for out in outs:
            assert np.array_equal(out, np.array([2, 0, 0, 0], dtype=FLOAT))

    def test_matches_oracle_exactly(self):
        rng = np.random.default_rng(10)
        P, m, k = 4, 32, 4
        for _ in range(50):
            ins = [random_sparse(rng, m, k) for _ in range(P)]
            want = np.zeros(m, dtype=FLOAT)
            for s in ins:  # rank-order accumulation
                want[s.indices] += s.values
            want /= FLOAT(P)
            outs = run_workers(
                create_local_cluster(P), lambda ep: topk_allreduce(ep, ins[ep.rank], P)
            )
            for out in outs:
                assert np.array_equal(out, want)

    def test_sent_bytes_match_formula(self):
        P, m, k = 4, 64, 5
        rng = np.random.default_rng(11)
        ins = [random_sparse(rng, m, k) for _ in range(P)]

        def worker(ep):
            before = ep.stats.snapshot()
            topk_allreduce(ep, ins[ep.rank], P)
            return ep.stats.snapshot().delta(before)

        for delta in run_workers(create_local_cluster(P), worker):
            assert delta.bytes_sent == predicted_bytes("topk", P, m, k)


class TestBinomialBcast:
    def test_single_rank(self):
        (ep,) = create_local_cluster(1)
        assert binomial_bcast(ep, 0, b"payload") == b"payload"

    def test_p8_message_counts(self):
        eps = create_local_cluster(8)

        def worker(ep):
            before = ep.stats.snapshot()
            out = binomial_bcast(ep, 0, b"data" if ep.rank == 0 else None)
            return out, ep.stats.snapshot().delta(before)

        outs = run_workers(eps, worker)
        assert all(out == b"data" for out, _ in outs)
        assert outs[0][1].msgs_sent == 3
        assert sum(d.msgs_sent for _, d in outs) == 7

    def test_p5_total_messages(self):
        eps = create_local_cluster(5)

        def worker(ep):
            before = ep.stats.snapshot()
            out = binomial_bcast(ep, 0, b"z" if ep.rank == 0 else None)
            return out, ep.stats.snapshot().delta(before)

        outs = run_workers(eps, worker)
        assert all(out == b"z" for out, _ in outs)
        assert sum(d.msgs_sent for _, d in outs) == 4

    def test_nonzero_root(self):
        eps = create_local_cluster(6)
        outs = run_workers(
            eps, lambda ep: binomial_bcast(ep, 2, b"rooted" if ep.rank == 2 else None)
        )
        assert all(out == b"rooted" for out in outs)


class TestGTopKAllReduce:
    def test_single_rank(self):
        (ep,) = create_local_cluster(1)
        local = sv(8, [(2, 1.0), (5, -4.0)])
        res = gtopk_allreduce(ep, local, 2, 1)
        assert res.global_topk == local
        assert res.global_mask.indices.tolist() == [2, 5]

    def test_two_worker_exchange(self):
        eps = create_local_cluster(2)
        ins = [sv(6, [(1, 0.5), (3, -2.0)]), sv(6, [(1, 0.6), (4, 1.0)])]
        outs = run_workers(eps, lambda ep: gtopk_allreduce(ep, ins[ep.rank], 2, 2))
        want = sv(6, [(1, np.float32(0.5) + np.float32(0.6)), (3, -2.0)])
        for res in outs:
            assert res.global_topk == want

    def test_entry_budget_enforced(self):
        (ep,) = create_local_cluster(1)
        with pytest.raises(ValueError):
            gtopk_allreduce(ep, sv(8, [(0, 1.0), (1, 1.0), (2, 1.0)]), 2, 1)

    @pytest.mark.parametrize("P", [1, 2, 3, 4, 5, 8, 16])
    def test_matches_tree_fold_oracle(self, P):
        rng = np.random.default_rng(100 + P)
        eps = create_local_cluster(P)
        for _ in range(30):
            m = int(rng.integers(4, 65))
            k = int(rng.integers(1, min(8, m) + 1))
            ins = [random_sparse(rng, m, k) for _ in range(P)]
            want = tree_fold(ins, k)
            outs = run_workers(
                eps, lambda ep: gtopk_allreduce(ep, ins[ep.rank], k, P)
            )
            for res in outs:
                assert res.global_topk == want
                assert res.global_mask.indices.tolist() == want.indices.tolist()

    def test_agreement_and_containment(self):
        rng = np.random.default_rng(55)
        P, m, k = 5, 40, 4
        ins = [random_sparse(rng, m, k) for _ in range(P)]
        outs = run_workers(
            create_local_cluster(P), lambda ep: gtopk_allreduce(ep, ins[ep.rank], k, P)
        )
        first = outs[0]
        union = set()
        for s in ins:
            union |= set(s.indices.tolist())
        for res in outs:
            assert res.global_topk == first.global_topk
            assert set(res.global_topk.indices.tolist()) <= union

    def test_cardinality_full_k(self):
        rng = np.random.default_rng(56)
        P, m, k = 4, 64, 6
        ins = [random_sparse(rng, m, k) for _ in range(P)]
        outs = run_workers(
            create_local_cluster(P), lambda ep: gtopk_allreduce(ep, ins[ep.rank], k, P)
        )
        assert all(res.global_topk.nnz == k for res in outs)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_rank0_message_accounting(self, n):
        P = 2**n
        k, m = 4, 128
        rng = np.random.default_rng(200 + n)
        ins = [random_sparse(rng, m, k) for _ in range(P)]

        def worker(ep):
            before = ep.stats.snapshot()
            gtopk_allreduce(ep, ins[ep.rank], k, P)
            return ep.stats.snapshot().delta(before)

        deltas = run_workers(create_local_cluster(P), worker)
        msg_bytes = 12 + 12 * k  # 2k elements plus framing per round
        assert deltas[0].msgs_recv == n
        assert deltas[0].msgs_sent == n
        assert deltas[0].bytes_recv == n * msg_bytes
        assert deltas[0].bytes_sent == n * msg_bytes

    def test_reduction_rounds_p8(self):
        assert ceil_log2(8) == 3
        assert ceil_log2(5) == 3
        assert ceil_log2(1) == 0
