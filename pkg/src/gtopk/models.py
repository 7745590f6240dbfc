"""Desk-scale differentiable models and synthetic datasets.

Three model kinds supply real gradients for the training experiments:

* least-squares: linear map d -> c, loss 0.5 * mean_n ||x W - y||^2, m = d*c
* logistic: binary classifier with bias, m = d + 1
* mlp2: d -> h (tanh) -> c with softmax cross entropy,
  m = d*h + h + h*c + c

Model math runs in float64 internally; gradients are returned as float32
vectors and losses as Python floats, so finite-difference checks against the
float64 loss are clean.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .sparse import FLOAT

DATASET_MAGIC = 0x67544454

_KIND_CODES = {"least-squares": 0, "logistic": 1, "mlp2": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class ToyModel:
    kind: str
    d: int
    c: int = 1
    h: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("input dim must be >= 1")
        if self.kind == "mlp2" and self.h < 1:
            raise ValueError("mlp2 needs a hidden width")

    @property
    def m(self) -> int:
        if self.kind == "least-squares":
            return self.d * self.c
        if self.kind == "logistic":
            return self.d + 1
        return self.d * self.h + self.h + self.h * self.c + self.c


@dataclass
class SyntheticDataset:
    kind: str
    inputs: np.ndarray  # n x d float32
    targets: np.ndarray  # n x c float32 (regression) or n int64 (labels)
    seed: int

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


def gen_dataset(
    kind: str, n: int, d: int, seed: int, c: int = 1, noise: float = 0.01
) -> SyntheticDataset:
    """Deterministic synthetic data: planted linear targets or two Gaussian clusters."""
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be >= 1, got n={n} d={d}")
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown dataset kind {kind!r}")
    rng = np.random.default_rng(seed)
    if kind == "least-squares":
        X = rng.standard_normal((n, d))
        w_star = rng.standard_normal((d, c))
        Y = X @ w_star + noise * rng.standard_normal((n, c))
        return SyntheticDataset(kind, X.astype(FLOAT), Y.astype(FLOAT), seed)
    # Two-cluster Gaussian classes along a random unit direction.
    labels = rng.integers(0, 2, size=n)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    centers = np.stack([-1.5 * direction, 1.5 * direction])
    X = centers[labels] + rng.standard_normal((n, d))
    return SyntheticDataset(kind, X.astype(FLOAT), labels.astype(np.int64), seed)


def init_params(model: ToyModel, seed: int = 0) -> np.ndarray:
    """Initial float32 parameter vector; identical for a given seed on all ranks."""
    if model.kind == "mlp2":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(model.d)
        return (scale * rng.standard_normal(model.m)).astype(FLOAT)
    return np.zeros(model.m, dtype=FLOAT)


def _unpack_mlp2(model: ToyModel, params: np.ndarray):
    d, h, c = model.d, model.h, model.c
    o1 = d * h
    o2 = o1 + h
    o3 = o2 + h * c
    W1 = params[:o1].reshape(d, h)
    b1 = params[o1:o2]
    W2 = params[o2:o3].reshape(h, c)
    b2 = params[o3:]
    return W1, b1, W2, b2


def _forward_loss(model: ToyModel, params64: np.ndarray, X: np.ndarray, y):
    """Float64 loss plus the cached forward pieces needed for the backward pass."""
    n = len(X)
    if model.kind == "least-squares":
        W = params64.reshape(model.d, model.c)
        R = X @ W - y
        loss = 0.5 * float((R * R).sum()) / n
        return loss, (R,)
    if model.kind == "logistic":
        w, b = params64[: model.d], params64[model.d]
        z = X @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        return loss, (sig,)
    W1, b1, W2, b2 = _unpack_mlp2(model, params64)
    A = np.tanh(X @ W1 + b1)
    Z = A @ W2 + b2
    zmax = Z.max(axis=1, keepdims=True)
    logsum = zmax[:, 0] + np.log(np.exp(Z - zmax).sum(axis=1))
    loss = float(np.mean(logsum - Z[np.arange(n), y]))
    softmax = np.exp(Z - logsum[:, None])
    return loss, (A, softmax)


def loss_value(model: ToyModel, params, batch) -> float:
    """Mean loss over the batch, computed in float64."""
    X, y = batch
    X64 = np.asarray(X, dtype=np.float64)
    y64 = np.asarray(y, dtype=np.float64) if model.kind != "mlp2" else np.asarray(y)
    params64 = np.asarray(params, dtype=np.float64)
    if params64.size != model.m:
        raise ValueError(f"params dim {params64.size}, model expects {model.m}")
    loss, _ = _forward_loss(model, params64, X64, y64)
    return loss


def grad(model: ToyModel, params, batch) -> tuple[float, np.ndarray]:
    """Mean loss and mean float32 gradient over the batch."""
    X, y = batch
    X64 = np.asarray(X, dtype=np.float64)
    params64 = np.asarray(params, dtype=np.float64)
    if params64.size != model.m:
        raise ValueError(f"params dim {params64.size}, model expects {model.m}")
    n = len(X64)
    if model.kind == "least-squares":
        y64 = np.asarray(y, dtype=np.float64)
        loss, (R,) = _forward_loss(model, params64, X64, y64)
        g = (X64.T @ R) / n
        return loss, g.reshape(-1).astype(FLOAT)
    if model.kind == "logistic":
        y64 = np.asarray(y, dtype=np.float64)
        loss, (sig,) = _forward_loss(model, params64, X64, y64)
        err = sig - y64
        g = np.concatenate([(X64.T @ err) / n, [err.mean()]])
        return loss, g.astype(FLOAT)
    labels = np.asarray(y)
    loss, (A, softmax) = _forward_loss(model, params64, X64, labels)
    _, _, W2, _ = _unpack_mlp2(model, params64)
    dZ = softmax.copy()
    dZ[np.arange(n), labels] -= 1.0
    dZ /= n
    gW2 = A.T @ dZ
    gb2 = dZ.sum(axis=0)
    dA = dZ @ W2.T
    dH = dA * (1.0 - A * A)
    gW1 = X64.T @ dH
    gb1 = dH.sum(axis=0)
    g = np.concatenate([gW1.reshape(-1), gb1, gW2.reshape(-1), gb2])
    return loss, g.astype(FLOAT)


def predict_accuracy(model: ToyModel, params, X, y) -> float:
    """Classification accuracy for logistic and mlp2 models."""
    X64 = np.asarray(X, dtype=np.float64)
    params64 = np.asarray(params, dtype=np.float64)
    if model.kind == "logistic":
        z = X64 @ params64[: model.d] + params64[model.d]
        pred = (z > 0).astype(np.int64)
    elif model.kind == "mlp2":
        W1, b1, W2, b2 = _unpack_mlp2(model, params64)
        Z = np.tanh(X64 @ W1 + b1) @ W2 + b2
        pred = Z.argmax(axis=1)
    else:
        raise ValueError("accuracy is undefined for regression models")
    return float(np.mean(pred == np.asarray(y)))


def shard_batches(ds: SyntheticDataset, P: int, b: int, iteration: int) -> list[np.ndarray]:
    """Disjoint per-rank sample index shards, deterministic in (seed, iteration)."""
    if b < 1 or P < 1:
        raise ValueError("P and b must be >= 1")
    per_iter = b * P
    if per_iter > ds.n:
        raise ValueError(f"b*P = {per_iter} oversubscribes dataset of {ds.n}")
    iters_per_epoch = ds.n // per_iter
    epoch, t = divmod(iteration, iters_per_epoch)
    perm = np.random.default_rng([ds.seed, epoch]).permutation(ds.n)
    base = t * per_iter
    return [perm[base + r * b : base + (r + 1) * b] for r in range(P)]


def gram_lipschitz(X, iters: int = 200) -> float:
    """Largest eigenvalue of X^T X / n via power iteration (smoothness bound)."""
    X64 = np.asarray(X, dtype=np.float64)
    n, d = X64.shape
    v = np.ones(d) / np.sqrt(d)
    lam = 0.0
    for _ in range(iters):
        w = X64.T @ (X64 @ v) / n
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        lam = float(v @ w)
        v = w / norm
    return lam


# ---------------------------------------------------------------------------
# optional binary dump/load
# ---------------------------------------------------------------------------

_DS_HEADER = struct.Struct("<IIQQQQ")  # magic, kind, n, d, c, seed


def save_dataset(ds: SyntheticDataset, path) -> None:
    """Binary dump: fixed header then row-major float32 inputs and targets."""
    X = np.ascontiguousarray(ds.inputs, dtype="<f4")
    T = np.ascontiguousarray(ds.targets, dtype="<f4")
    c = T.shape[1] if T.ndim == 2 else 1
    with open(path, "wb") as fh:
        fh.write(
            _DS_HEADER.pack(
                DATASET_MAGIC, _KIND_CODES[ds.kind], ds.n, ds.d, c, ds.seed
            )
        )
        fh.write(X.tobytes())
        fh.write(T.tobytes())


def load_dataset(path) -> SyntheticDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DS_HEADER.size:
        raise ValueError("dataset file truncated")
    magic, kind_code, n, d, c, seed = _DS_HEADER.unpack_from(raw, 0)
    if magic != DATASET_MAGIC:
        raise ValueError(f"bad dataset magic 0x{magic:08X}")
    kind = _KIND_NAMES.get(kind_code)
    if kind is None:
        raise ValueError(f"unknown dataset kind code {kind_code}")
    off = _DS_HEADER.size
    expect = off + 4 * n * d + 4 * n * c
    if len(raw) != expect:
        raise ValueError(f"dataset file length {len(raw)}, expected {expect}")
    X = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    T = np.frombuffer(raw, dtype="<f4", count=n * c, offset=off + 4 * n * d)
    if kind == "least-squares":
        targets = T.reshape(n, c).astype(FLOAT)
    else:
        targets = T.astype(np.int64)
    return SyntheticDataset(kind, X.astype(FLOAT), targets, seed)
