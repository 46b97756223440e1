"""Toy models, synthetic datasets and the SGD update.

Loss conventions: half squared error for linear regression, binary
cross-entropy for the logistic model and the MLP (labels in {0, 1}). The
logistic model and the MLP carry bias terms; linear regression does not.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MODEL_KINDS = ("linear", "logistic", "mlp")
DATASET_MAGIC = b"DRDS1"


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _bce(logits, y):
    # log(1 + e^z) - y z, stable for both signs
    return np.logaddexp(0.0, logits) - y * logits


def _ordered_sum(rows: np.ndarray) -> np.ndarray:
    acc = rows[0].copy()
    for row in rows[1:]:
        acc += row
    return acc


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic"
    feat_dim: int = 10
    hidden: tuple[int, ...] = (8,)
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.feat_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer sizes must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layers(self) -> list[int]:
        return [self.feat_dim, *self.hidden, 1]

    @property
    def dim(self) -> int:
        if self.kind == "linear":
            return self.feat_dim
        if self.kind == "logistic":
            return self.feat_dim + 1
        sizes = self.layers
        return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))

    def init_weights(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if self.kind != "mlp":
            return np.zeros(self.dim)
        rng = rng or np.random.default_rng(0)
        parts = []
        for i, o in zip(self.layers[:-1], self.layers[1:]):
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(i), size=o * i))
            parts.append(np.zeros(o))
        return np.concatenate(parts)


def _unflatten(spec: ModelSpec, w):
    out, pos = [], 0
    for i, o in zip(spec.layers[:-1], spec.layers[1:]):
        W = w[pos : pos + o * i].reshape(o, i)
        pos += o * i
        b = w[pos : pos + o]
        pos += o
        out.append((W, b))
    return out


def _mlp_forward(spec, w, X):
    acts = [X]
    pre = []
    layers = _unflatten(spec, w)
    a = X
    for n, (W, b) in enumerate(layers):
        z = a @ W.T + b
        pre.append(z)
        if n < len(layers) - 1:
            a = np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0)
            acts.append(a)
    return layers, acts, pre, pre[-1][:, 0]


def logits(spec: ModelSpec, w, X) -> np.ndarray:
    X = np.atleast_2d(X)
    if spec.kind == "linear":
        return X @ w
    if spec.kind == "logistic":
        return X @ w[:-1] + w[-1]
    return _mlp_forward(spec, w, X)[3]


def per_example_loss(spec: ModelSpec, w, X, y) -> np.ndarray:
    z = logits(spec, w, X)
    if spec.kind == "linear":
        return 0.5 * (z - y) ** 2
    return _bce(z, y)


def loss(spec: ModelSpec, w, X, y) -> float:
    return float(np.mean(per_example_loss(spec, w, X, y)))


def accuracy(spec: ModelSpec, w, X, y) -> Optional[float]:
    if spec.kind == "linear":
        return None
    return float(np.mean((logits(spec, w, X) > 0) == (y > 0.5)))


def per_example_gradients(spec: ModelSpec, w, X, y) -> np.ndarray:
    """n x dim matrix of loss gradients, one row per example."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if spec.kind == "linear":
        return (X @ w - y)[:, None] * X
    if spec.kind == "logistic":
        resid = _sigmoid(X @ w[:-1] + w[-1]) - y
        return np.hstack([resid[:, None] * X, resid[:, None]])
    layers, acts, pre, z = _mlp_forward(spec, w, X)
    delta = (_sigmoid(z) - y)[:, None]
    grads = []
    for n in range(len(layers) - 1, -1, -1):
        W, _ = layers[n]
        grads.append(delta)  # bias
        grads.append(np.einsum("no,ni->noi", delta, acts[n]).reshape(len(X), -1))
        if n:
            back = delta @ W
            if spec.activation == "tanh":
                delta = back * (1.0 - acts[n] ** 2)
            else:
                delta = back * (pre[n - 1] > 0)
    return np.hstack(grads[::-1])


def gradient(spec: ModelSpec, w, X, y) -> np.ndarray:
    """Sum of per-example gradients over a shard, accumulated in example order."""
    if len(np.atleast_1d(y)) == 0:
        raise ValueError("empty shard")
    return _ordered_sum(per_example_gradients(spec, w, X, y))


def sgd_step(w: np.ndarray, decoded_sum: np.ndarray, lr: float, B: int) -> np.ndarray:
    return w - (lr / B) * decoded_sum


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    X: np.ndarray
    y: np.ndarray
    kind: str = "classification"
    seed: int = 0
    w_true: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.X.shape[1]

    def save(self, path) -> None:
        """``DRDS1``, n and dim as little-endian uint64, features row-major, labels; all float64 LE."""
        with open(path, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(struct.pack("<QQ", self.n, self.feat_dim))
            fh.write(np.ascontiguousarray(self.X, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.y, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, kind: str = "classification") -> "SyntheticDataset":
        data = Path(path).read_bytes()
        if data[:5] != DATASET_MAGIC:
            raise ValueError(f"{path}: not a dataset cache file")
        n, dim = struct.unpack("<QQ", data[5:21])
        expected = 21 + 8 * n * dim + 8 * n
        if len(data) != expected:
            raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
        X = np.frombuffer(data, dtype="<f8", count=n * dim, offset=21).reshape(n, dim).astype(float)
        y = np.frombuffer(data, dtype="<f8", count=n, offset=21 + 8 * n * dim).astype(float)
        return cls(X, y, kind)


def generate_synthetic(
    kind: str,
    n: int,
    feat_dim: int,
    noise_sd: float = 0.0,
    seed: int = 0,
    separation: float = 6.0,
) -> SyntheticDataset:
    """Regression: ``y = x w* + noise`` with standard normal features.

    Classification: two balanced unit-variance Gaussian blobs whose means are
    ``separation`` apart along a random direction; labels 0 and 1.
    """
    if n < 1 or feat_dim < 1:
        raise ValueError("need n >= 1 and feat_dim >= 1")
    rng = np.random.default_rng(seed)
    if kind == "regression":
        w_true = rng.normal(size=feat_dim)
        X = rng.normal(size=(n, feat_dim))
        y = X @ w_true + noise_sd * rng.normal(size=n)
        return SyntheticDataset(X, y, kind, seed, w_true)
    if kind != "classification":
        raise ValueError(f"unknown dataset kind {kind!r}")
    u = rng.normal(size=feat_dim)
    u /= np.linalg.norm(u)
    y = (np.arange(n) % 2).astype(float)
    X = rng.normal(size=(n, feat_dim)) + np.outer(y - 0.5, separation * u)
    order = rng.permutation(n)
    return SyntheticDataset(X[order], y[order], kind, seed)
