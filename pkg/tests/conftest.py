import socket

import numpy as np
import pytest

from gtopk.sparse import FLOAT, SparseVector, top_k_select, top_op


def random_dense(rng, m):
    return rng.standard_normal(m).astype(FLOAT)


def random_sparse(rng, m, k):
    return top_k_select(random_dense(rng, m), k)[0]


def tree_fold(inputs: list[SparseVector], k: int) -> SparseVector:
    """Single-threaded reference for the recursive-halving merge tree."""
    P = len(inputs)
    acc = dict(enumerate(inputs))
    j = 1
    while (1 << (j - 1)) < P:
        half = 1 << (j - 1)
        for r in range(0, P, 1 << j):
            if r + half < P:
                acc[r] = top_op(acc[r + half], acc[r], k)
        j += 1
    return acc[0]


def free_ports(n: int) -> list[int]:
    """Grab n currently-free localhost ports (best effort)."""
    socks, ports = [], []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
