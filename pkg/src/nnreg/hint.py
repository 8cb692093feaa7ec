"""Class-wise invariance ("hint") penalty on hidden representations.

Same-class samples in a minibatch are pulled toward a common hidden
representation. The penalty for one class is the mean pairwise dissimilarity
between its members; the batch penalty averages over the classes that have at
least two members in the batch.
"""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core_math import Activation, Loss, activation_derivative, as_matrix, one_hot
from .network import (Network, backprop_from, backward, forward, layer_output)
from .optim import OptimConfig, OptimizerState, sgd_step

log = logging.getLogger(__name__)

# arccos has an infinite slope at cosine +-1; pairs closer than this are skipped
AS_COSINE_MARGIN = 1e-8
BOUNDED_ACTIVATIONS = (Activation.SIGMOID, Activation.TANH)


class Dissimilarity(str, enum.Enum):
    SED = "sed"
    NMD = "nmd"
    AS = "as"


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class HintConfig:
    layer_index: int
    measure: Dissimilarity = Dissimilarity.SED
    gamma: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "measure", Dissimilarity(self.measure))
        if self.gamma < 0 or self.lam < 0:
            raise ValueError("gamma and lam must be >= 0")
        if self.layer_index < 1:
            raise ValueError("layer_index is 1-based and must be >= 1")


def dissimilarity(kind, a, b) -> float:
    kind = Dissimilarity(kind)
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError(f"vectors must share a nonzero length, got {a.size} and {b.size}")
    if kind is Dissimilarity.SED:
        d = a - b
        return float(d @ d)
    if kind is Dissimilarity.NMD:
        return float(np.mean(np.abs(a - b)))
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("angular similarity is undefined for a zero vector")
    return float(np.arccos(np.clip(a @ b / (na * nb), -1.0, 1.0)))


def _row_norms(r):
    n = np.linalg.norm(r, axis=1)
    if np.any(n == 0):
        raise DegenerateInputError("angular similarity is undefined for a zero vector")
    return n


def _pair_sum(kind: Dissimilarity, r: np.ndarray) -> float:
    """Sum of the dissimilarity over unordered pairs of rows of ``r``."""
    n = r.shape[0]
    if kind is Dissimilarity.SED:
        total = 0.0
        for i in range(n - 1):
            d = r[i + 1:] - r[i]
            total += float(np.sum(d * d))
        return total
    if kind is Dissimilarity.NMD:
        total = 0.0
        for i in range(n - 1):
            total += float(np.sum(np.abs(r[i + 1:] - r[i])))
        return total / r.shape[1]
    u = r / _row_norms(r)[:, None]
    total = 0.0
    for i in range(n - 1):
        total += float(np.sum(np.arccos(np.clip(u[i + 1:] @ u[i], -1.0, 1.0))))
    return total


def _pair_sum_grad(kind: Dissimilarity, r: np.ndarray):
    """Unordered pair sum and its gradient with respect to every row."""
    n, v = r.shape
    grad = np.zeros_like(r)
    total = 0.0
    if kind is Dissimilarity.AS:
        norms = _row_norms(r)
        u = r / norms[:, None]
    skipped = 0
    for i in range(n - 1):
        d = r[i] - r[i + 1:]
        if kind is Dissimilarity.SED:
            total += float(np.sum(d * d))
            g = 2.0 * d
        elif kind is Dissimilarity.NMD:
            total += float(np.sum(np.abs(d))) / v
            g = np.sign(d) / v
        else:
            cos = u[i + 1:] @ u[i]
            total += float(np.sum(np.arccos(np.clip(cos, -1.0, 1.0))))
            ok = np.abs(cos) < 1.0 - AS_COSINE_MARGIN
            skipped += int(np.sum(~ok))
            scale = np.where(ok, -1.0 / np.sqrt(np.where(ok, 1.0 - cos * cos, 1.0)), 0.0)
            # d arccos(cos(a, b)) / da and / db
            ga = scale[:, None] * (u[i + 1:] - cos[:, None] * u[i]) / norms[i]
            gb = scale[:, None] * (u[i] - cos[:, None] * u[i + 1:]) / norms[i + 1:, None]
            grad[i] += ga.sum(axis=0)
            grad[i + 1:] += gb
            continue
        grad[i] += g.sum(axis=0)
        grad[i + 1:] -= g
    if skipped:
        log.debug("angular hint: %d near-parallel pairs contributed no gradient", skipped)
    return total, grad


def _class_groups(labels):
    labels = np.asarray(labels).ravel()
    groups = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size >= 2:
            groups.append(idx)
    return groups


def hint_penalty(representations, labels, measure=Dissimilarity.SED) -> float:
    """Hint penalty of a minibatch of representations (one row per sample)."""
    r = as_matrix(representations)
    if r.shape[0] != np.asarray(labels).size:
        raise ValueError("need exactly one label per representation row")
    measure = Dissimilarity(measure)
    groups = _class_groups(labels)
    if not groups:
        return 0.0
    total = 0.0
    for idx in groups:
        n = idx.size
        total += 2.0 * _pair_sum(measure, r[idx]) / (n * (n - 1))
    return total / len(groups)


def hint_penalty_grad(representations, labels, measure=Dissimilarity.SED):
    """Return ``(J_H, dJ_H / d representations)``."""
    r = as_matrix(representations)
    if r.shape[0] != np.asarray(labels).size:
        raise ValueError("need exactly one label per representation row")
    measure = Dissimilarity(measure)
    grad = np.zeros_like(r)
    groups = _class_groups(labels)
    if not groups:
        return 0.0, grad
    total = 0.0
    for idx in groups:
        n = idx.size
        coef = 2.0 / (n * (n - 1) * len(groups))
        s, g = _pair_sum_grad(measure, r[idx])
        total += coef * s
        grad[idx] += coef * g
    return total, grad


def hint_gradients(net: Network, batch, labels, cfg: HintConfig):
    """Penalty value and gradients for layers ``1..cfg.layer_index``."""
    k = cfg.layer_index
    sub = Network(net.specs[:k], net.weights[:k])
    trace = forward(sub, batch)
    value, d_rep = hint_penalty_grad(trace.outputs[k], labels, cfg.measure)
    act = sub.specs[-1].activation
    if act is Activation.SOFTMAX:
        raise ValueError("the hint penalty cannot sit on a softmax layer")
    dz = d_rep * activation_derivative(act, trace.pre[-1])
    grads, _ = backprop_from(sub, trace, k, dz, need_input=False)
    return value, grads


def check_hint_layer(net: Network, cfg: HintConfig) -> None:
    if not 1 <= cfg.layer_index <= net.n_layers - 1:
        raise ValueError(f"hint layer {cfg.layer_index} is not a hidden layer of a "
                         f"{net.n_layers}-layer network")
    act = net.specs[cfg.layer_index - 1].activation
    if act not in BOUNDED_ACTIVATIONS:
        warnings.warn(f"hint penalty on an unbounded {act.value} layer; bounded "
                      "activations (sigmoid, tanh) are better suited", stacklevel=2)


def train_epoch_hint(net: Network, X, labels, cfg: HintConfig, opt_sup: OptimizerState,
                     opt_hint: OptimizerState, sup_config: OptimConfig,
                     hint_config: OptimConfig, batch_size: int, rng) -> dict:
    """One epoch of alternating supervised / hint steps with separate optimizers.

    ``labels`` are integer class indices in ``0..n_classes-1``; ``rng`` is a
    numpy Generator used for the epoch shuffle.
    """
    X = as_matrix(X)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n_classes = net.output_dim
    k = cfg.layer_index
    order = rng.permutation(X.shape[0])
    sup_losses, hint_losses = [], []
    for start in range(0, order.size, batch_size):
        idx = order[start:start + batch_size]
        xb, yb = X[idx], labels[idx]
        target = one_hot(yb, n_classes)
        trace = forward(net, xb)
        p = np.clip(trace.prediction[np.arange(idx.size), yb], 1e-12, 1.0)
        sup_losses.append(float(-np.mean(np.log(p))))
        if cfg.gamma:
            grads = backward(net, trace, Loss.CROSS_ENTROPY, target)
            if cfg.gamma != 1.0:
                grads = [cfg.gamma * g for g in grads]
            sgd_step(net.weights, grads, opt_sup, sup_config)
        if cfg.lam:
            value, grads = hint_gradients(net, xb, yb, cfg)
            hint_losses.append(value)
            if cfg.lam != 1.0:
                grads = [cfg.lam * g for g in grads]
            sgd_step(net.weights[:k], grads, opt_hint, hint_config)
    return {
        "J_sup_train": float(np.mean(sup_losses)) if sup_losses else 0.0,
        "J_H_train": float(np.mean(hint_losses)) if hint_losses else 0.0,
    }


def invariance_probe(net: Network, X, labels, measure=Dissimilarity.NMD,
                     batch_size: int | None = None) -> list[float]:
    """Hint penalty measured at every layer, output layer included.

    With ``batch_size=None`` each layer's penalty is taken over the whole set;
    otherwise it is averaged over consecutive minibatches.
    """
    X = as_matrix(X)
    labels = np.asarray(labels).ravel()
    if batch_size is None:
        batch_size = X.shape[0]
    values = []
    for k in range(1, net.n_layers + 1):
        per_batch = []
        for start in range(0, X.shape[0], batch_size):
            sl = slice(start, start + batch_size)
            rep = layer_output(net, X[sl], k)
            per_batch.append(hint_penalty(rep, labels[sl], measure))
        values.append(float(np.mean(per_batch)))
    return values
