"""Dense matrix helpers, activations and losses.

Every numeric quantity is a 2-D ``float64`` numpy array (rows = samples).
"""
from __future__ import annotations

import enum

import numpy as np

PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class Loss(str, enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array (a 1-D input becomes one row)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def apply_activation(kind, z) -> np.ndarray:
    kind = Activation(kind)
    z = as_matrix(z)
    if kind is Activation.SIGMOID:
        return sigmoid(z)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.SOFTMAX:
        if z.shape[1] < 1:
            raise ShapeError("softmax needs at least one column")
        return softmax(z)
    return z.copy()


def activation_derivative(kind, z) -> np.ndarray:
    """Elementwise derivative of the activation at pre-activation ``z``.

    ReLU returns 1 at exactly zero. Softmax has no elementwise derivative
    here; its gradient is fused with cross-entropy in the backward pass.
    """
    kind = Activation(kind)
    z = as_matrix(z)
    if kind is Activation.SIGMOID:
        s = sigmoid(z)
        return s * (1.0 - s)
    if kind is Activation.TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if kind is Activation.RELU:
        return (z >= 0).astype(np.float64)
    if kind is Activation.IDENTITY:
        return np.ones_like(z)
    raise NotImplementedError(
        "softmax derivative is only available fused with cross-entropy")


def _check_pair(prediction, target):
    p = as_matrix(prediction)
    t = as_matrix(target)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    return p, t


def check_one_hot(target) -> None:
    t = as_matrix(target)
    ok = np.all((t == 0.0) | (t == 1.0)) and np.all(t.sum(axis=1) == 1.0)
    if not ok:
        raise ValueError("cross-entropy targets must be one-hot rows")


def loss_value(kind, prediction, target) -> float:
    """Batch-mean loss. MSE carries the 1/2 factor and sums over output dims."""
    kind = Loss(kind)
    p, t = _check_pair(prediction, target)
    n = p.shape[0]
    if n == 0:
        return 0.0
    if kind is Loss.MSE:
        d = t - p
        return float(0.5 * np.sum(d * d) / n)
    check_one_hot(t)
    logp = np.log(np.clip(p, PROB_FLOOR, 1.0))
    return float(-np.sum(t * logp) / n)


def loss_gradient(kind, prediction, target) -> np.ndarray:
    """d loss / d prediction, for the batch-mean loss of :func:`loss_value`."""
    kind = Loss(kind)
    p, t = _check_pair(prediction, target)
    n = max(p.shape[0], 1)
    if kind is Loss.MSE:
        return (p - t) / n
    check_one_hot(t)
    clipped = np.clip(p, PROB_FLOOR, 1.0)
    return -t / clipped / n * (p >= PROB_FLOOR)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def argmax_rows(p) -> np.ndarray:
    # np.argmax returns the first maximal index: lowest-index tie-break
    return np.argmax(as_matrix(p), axis=1)
