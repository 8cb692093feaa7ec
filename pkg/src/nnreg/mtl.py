"""Structured-output regression trained jointly with input and output auto-encoders.

The main path is ``dec_out(link(enc_in(x)))``. The input auto-encoder
``dec_in(enc_in(x))`` shares ``enc_in`` with it and the output auto-encoder
``dec_out(enc_out(y))`` shares ``dec_out``. Sharing is by storage: the same
weight arrays appear in several parameter groups.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import Loss, as_matrix, loss_gradient, loss_value
from .network import Network, backprop_output, forward, init_weights, make_specs
from .optim import OptimConfig, OptimizerState, sgd_step

SEGMENTS = ("enc_in", "dec_in", "link", "enc_out", "dec_out")


@dataclass
class MtlNetwork:
    enc_in: Network
    dec_in: Network
    link: Network
    enc_out: Network
    dec_out: Network

    @classmethod
    def build(cls, x_dim, x_code, link_hidden, y_code, y_dim, seed) -> "MtlNetwork":
        """Sigmoid everywhere except the tanh output decoder (targets in [-1, 1])."""
        seeds = np.random.SeedSequence(seed).spawn(len(SEGMENTS))
        dims = {
            "enc_in": ([x_dim, x_code], "sigmoid"),
            "dec_in": ([x_code, x_dim], "sigmoid"),
            "link": ([x_code, *link_hidden, y_code], "sigmoid"),
            "enc_out": ([y_dim, y_code], "sigmoid"),
            "dec_out": ([y_code, y_dim], "tanh"),
        }
        parts = {}
        for name, ss in zip(SEGMENTS, seeds):
            chain, out_act = dims[name]
            parts[name] = init_weights(make_specs(chain, "sigmoid", out_act), ss)
        return cls(**parts)

    def segment(self, name) -> Network:
        return getattr(self, name)

    def params(self, *names) -> list[np.ndarray]:
        names = names or SEGMENTS
        return [w for n in names for w in self.segment(n).weights]

    @property
    def params_in(self):
        return self.params("enc_in", "dec_in")

    @property
    def params_out(self):
        return self.params("enc_out", "dec_out")

    def main_network(self) -> Network:
        """The test-time predictor as one Network sharing this object's arrays."""
        segs = [self.enc_in, self.link, self.dec_out]
        return Network([s for n in segs for s in n.specs], [w for n in segs for w in n.weights])

    def predict(self, x) -> np.ndarray:
        return forward(self.main_network(), x).prediction

    def copy(self) -> "MtlNetwork":
        return MtlNetwork(*(self.segment(n).copy() for n in SEGMENTS))


class ScheduleKind(str, enum.Enum):
    STAIRS = "stairs"
    LINEAR = "linear"
    ABRIDGED_LINEAR = "abridged_linear"
    EXPONENTIAL = "exponential"
    CONSTANT = "constant"


@dataclass(frozen=True)
class ScheduleSpec:
    """Importance-weight trajectories over epochs.

    ``t1`` is the switch epoch for stairs and the saturation epoch for the
    abridged linear schedule; ``total_epochs`` drives the full linear one and
    ``sigma`` the exponential decay. ``constant`` holds the start values.
    """
    kind: ScheduleKind = ScheduleKind.ABRIDGED_LINEAR
    t1: float = 20
    total_epochs: float = 100
    sigma: float = 40.0
    sup: tuple = (0.0, 1.0)
    inp: tuple = (1.0, 0.0)
    out: tuple = (1.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        for pair in (self.sup, self.inp, self.out):
            if not all(0.0 <= v <= 1.0 for v in pair):
                raise ValueError("importance weights must lie in [0, 1]")


def schedule_eval(spec: ScheduleSpec, t: float):
    """``(lambda_sup, lambda_in, lambda_out)`` at epoch ``t``."""
    if t < 0:
        raise ValueError("epoch must be >= 0")
    kind = spec.kind
    if kind is ScheduleKind.CONSTANT:
        return spec.sup[0], spec.inp[0], spec.out[0]
    if kind is ScheduleKind.STAIRS:
        if t < spec.t1:
            return 0.0, 1.0, 1.0
        return 1.0, 0.0, 0.0
    if kind is ScheduleKind.EXPONENTIAL:
        sec = math.exp(-t / spec.sigma)
        return 1.0 - sec, sec, sec
    horizon = spec.t1 if kind is ScheduleKind.ABRIDGED_LINEAR else spec.total_epochs
    frac = min(t / horizon, 1.0) if horizon > 0 else 1.0
    return tuple(a + (b - a) * frac for a, b in (spec.sup, spec.inp, spec.out))


def corrupt_input(x, level: float, rng) -> np.ndarray:
    """Zero each entry independently with probability ``level``.

    ``rng`` is a numpy Generator or anything ``default_rng`` accepts.
    """
    if not 0.0 <= level < 1.0:
        raise ValueError("corruption level must lie in [0, 1)")
    x = as_matrix(x)
    if level == 0.0:
        return x.copy()
    rng = np.random.default_rng(rng)
    return np.where(rng.random(x.shape) < level, 0.0, x)


@dataclass
class TriModalDataset:
    """Paired samples plus optional input-only and label-only extras."""
    X: np.ndarray
    Y: np.ndarray
    X_only: np.ndarray | None = None
    Y_only: np.ndarray | None = None

    def __post_init__(self):
        self.X = as_matrix(self.X)
        self.Y = as_matrix(self.Y)
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("paired inputs and targets must have equal row counts")
        if self.X_only is None:
            self.X_only = np.empty((0, self.X.shape[1]))
        if self.Y_only is None:
            self.Y_only = np.empty((0, self.Y.shape[1]))
        self.X_only = as_matrix(self.X_only).reshape(-1, self.X.shape[1])
        self.Y_only = as_matrix(self.Y_only).reshape(-1, self.Y.shape[1])

    @property
    def n_paired(self):
        return self.X.shape[0]

    @property
    def n_total(self):
        return self.n_paired + self.X_only.shape[0] + self.Y_only.shape[0]

    @property
    def features(self):
        return np.vstack([self.X, self.X_only])

    @property
    def labels(self):
        return np.vstack([self.Y, self.Y_only])

    def batch(self, idx):
        """Split global sample indices into (paired, input-only, label-only) rows."""
        idx = np.asarray(idx)
        n_s, n_f = self.n_paired, self.X_only.shape[0]
        s = idx[idx < n_s]
        f = idx[(idx >= n_s) & (idx < n_s + n_f)] - n_s
        lab = idx[idx >= n_s + n_f] - n_s - n_f
        return MiniBatch(self.X[s], self.Y[s], self.X_only[f], self.Y_only[lab])


@dataclass
class MiniBatch:
    xs: np.ndarray
    ys: np.ndarray
    x_only: np.ndarray
    y_only: np.ndarray
    x_corrupt: np.ndarray | None = None

    @property
    def x_all(self):
        return np.vstack([self.xs, self.x_only])

    @property
    def y_all(self):
        return np.vstack([self.ys, self.y_only])

    def corrupted(self, level, rng) -> "MiniBatch":
        return MiniBatch(self.xs, self.ys, self.x_only, self.y_only,
                         corrupt_input(self.x_all, level, rng))


@dataclass
class MtlLosses:
    J: float
    J_s: float
    J_in: float
    J_out: float
    empty: frozenset = field(default_factory=frozenset)


def _ae_pass(enc: Network, dec: Network, source, target, want_grads):
    t_enc = forward(enc, source)
    t_dec = forward(dec, t_enc.prediction)
    value = loss_value(Loss.MSE, t_dec.prediction, target)
    if not want_grads:
        return value, None, None
    g_dec, d_code = backprop_output(dec, t_dec, loss_gradient(Loss.MSE, t_dec.prediction, target))
    g_enc, _ = backprop_output(enc, t_enc, d_code)
    return value, g_enc, g_dec


def _main_pass(net: MtlNetwork, x, y, want_grads):
    t_enc = forward(net.enc_in, x)
    t_link = forward(net.link, t_enc.prediction)
    t_dec = forward(net.dec_out, t_link.prediction)
    value = loss_value(Loss.MSE, t_dec.prediction, y)
    if not want_grads:
        return value, None
    g_dec, d = backprop_output(net.dec_out, t_dec, loss_gradient(Loss.MSE, t_dec.prediction, y))
    g_link, d = backprop_output(net.link, t_link, d)
    g_enc, _ = backprop_output(net.enc_in, t_enc, d)
    return value, {"enc_in": g_enc, "link": g_link, "dec_out": g_dec}


def _zeros(net: MtlNetwork):
    return {n: [np.zeros_like(w) for w in net.segment(n).weights] for n in SEGMENTS}


def _accumulate(total, part, scale):
    for name, grads in part.items():
        for acc, g in zip(total[name], grads):
            acc += scale * g


def input_ae_loss(net: MtlNetwork, batch: MiniBatch, want_grads=False):
    src = batch.x_corrupt if batch.x_corrupt is not None else batch.x_all
    value, g_enc, g_dec = _ae_pass(net.enc_in, net.dec_in, src, batch.x_all, want_grads)
    return value, ({"enc_in": g_enc, "dec_in": g_dec} if want_grads else None)


def output_ae_loss(net: MtlNetwork, batch: MiniBatch, want_grads=False):
    value, g_enc, g_dec = _ae_pass(net.enc_out, net.dec_out, batch.y_all, batch.y_all, want_grads)
    return value, ({"enc_out": g_enc, "dec_out": g_dec} if want_grads else None)


def mtl_criterion(net: MtlNetwork, batch: MiniBatch, lambdas, want_grads=False):
    """Weighted three-task loss on one minibatch.

    Each sub-loss is averaged over the rows it applies to; a sub-loss with no
    applicable rows is 0 and its name is listed in ``MtlLosses.empty``.
    Returns ``(MtlLosses, grads)`` with grads keyed by segment name.
    """
    lam_sup, lam_in, lam_out = lambdas
    if not all(0.0 <= v <= 1.0 for v in lambdas):
        raise ValueError("importance weights must lie in [0, 1]")
    grads = _zeros(net) if want_grads else None
    empty = set()
    j_s = j_in = j_out = 0.0
    if batch.xs.shape[0]:
        j_s, g = _main_pass(net, batch.xs, batch.ys, want_grads and lam_sup > 0)
        if g:
            _accumulate(grads, g, lam_sup)
    else:
        empty.add("J_s")
    if batch.xs.shape[0] + batch.x_only.shape[0]:
        j_in, g = input_ae_loss(net, batch, want_grads and lam_in > 0)
        if g:
            _accumulate(grads, g, lam_in)
    else:
        empty.add("J_in")
    if batch.ys.shape[0] + batch.y_only.shape[0]:
        j_out, g = output_ae_loss(net, batch, want_grads and lam_out > 0)
        if g:
            _accumulate(grads, g, lam_out)
    else:
        empty.add("J_out")
    total = lam_sup * j_s + lam_in * j_in + lam_out * j_out
    return MtlLosses(total, j_s, j_in, j_out, frozenset(empty)), grads


@dataclass
class MtlOptimizers:
    main: OptimizerState
    inp: OptimizerState
    out: OptimizerState
    main_config: OptimConfig = OptimConfig(learning_rate=1e-3, momentum=0.9)
    ae_config: OptimConfig = OptimConfig(learning_rate=1e-3, momentum=0.9, l2_alpha=1e-2)

    @classmethod
    def for_network(cls, net: MtlNetwork, main_config=None, ae_config=None):
        kw = {}
        if main_config is not None:
            kw["main_config"] = main_config
        if ae_config is not None:
            kw["ae_config"] = ae_config
        return cls(OptimizerState.zeros_like(net.params()),
                   OptimizerState.zeros_like(net.params_in),
                   OptimizerState.zeros_like(net.params_out), **kw)


def _flatten(grads, names):
    return [g for n in names for g in grads[n]]


def train_epoch_mtl(net: MtlNetwork, data: TriModalDataset, lambdas, opts: MtlOptimizers,
                    batch_size: int, rng, corruption: float = 0.2) -> dict:
    """One epoch: per minibatch an input-AE step, an output-AE step, then a joint step.

    ``lambdas`` are held fixed for the epoch. A sub-task step is skipped when
    its importance weight is zero or the batch has no rows for it.
    """
    lam_sup, lam_in, lam_out = lambdas
    order = rng.permutation(data.n_total)
    sums = {"J": 0.0, "J_s": 0.0, "J_in": 0.0, "J_out": 0.0}
    counts = dict.fromkeys(sums, 0)
    for start in range(0, order.size, batch_size):
        batch = data.batch(order[start:start + batch_size])
        has_x = batch.xs.shape[0] + batch.x_only.shape[0] > 0
        has_y = batch.ys.shape[0] + batch.y_only.shape[0] > 0
        if has_x and lam_in > 0:
            batch = batch.corrupted(corruption, rng)
            value, g = input_ae_loss(net, batch, want_grads=True)
            grads = [lam_in * x for x in _flatten(g, ("enc_in", "dec_in"))]
            sgd_step(net.params_in, grads, opts.inp, opts.ae_config)
        if has_y and lam_out > 0:
            value, g = output_ae_loss(net, batch, want_grads=True)
            grads = [lam_out * x for x in _flatten(g, ("enc_out", "dec_out"))]
            sgd_step(net.params_out, grads, opts.out, opts.ae_config)
        if batch.xs.shape[0]:
            losses, g = mtl_criterion(net, batch, lambdas, want_grads=True)
            sgd_step(net.params(), _flatten(g, SEGMENTS), opts.main, opts.main_config)
            for key in sums:
                if key not in losses.empty:
                    sums[key] += getattr(losses, key)
                    counts[key] += 1
    return {k: (sums[k] / counts[k] if counts[k] else 0.0) for k in sums}
