"""Central finite-difference checks of every hand-derived gradient."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core_math import Activation, Loss, loss_value, one_hot
from .hint import Dissimilarity, HintConfig, hint_gradients, hint_penalty
from .mtl import MiniBatch, MtlNetwork, SEGMENTS, corrupt_input, mtl_criterion
from .network import LayerSpec, backward, forward, init_weights

FD_STEP = 1e-6
TOLERANCE = 1e-5
# below this magnitude the relative error turns into an absolute one
REL_FLOOR = 1e-3

HIDDEN_ACTS = (Activation.SIGMOID, Activation.TANH, Activation.RELU, Activation.IDENTITY)
OUTPUT_HEADS = ((Activation.SIGMOID, Loss.MSE), (Activation.TANH, Loss.MSE),
                (Activation.RELU, Loss.MSE), (Activation.IDENTITY, Loss.MSE),
                (Activation.SOFTMAX, Loss.CROSS_ENTROPY))


def numerical_gradient(fn, params, h=FD_STEP) -> list[np.ndarray]:
    """Central differences of the scalar ``fn()`` w.r.t. each array in ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = fn()
            p[i] = old - h
            down = fn()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


@dataclass
class GradCase:
    name: str
    loss: callable
    grads: callable
    params: list

    def check(self) -> float:
        analytic = self.grads()
        numeric = numerical_gradient(self.loss, self.params)
        return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def _targets(rng, loss, batch, dim, act):
    if loss is Loss.CROSS_ENTROPY:
        return one_hot(rng.integers(dim, size=batch), dim)
    lo = -1.0 if act in (Activation.TANH, Activation.IDENTITY) else 0.0
    return rng.uniform(lo, 1.0, size=(batch, dim))


def network_case(rng, hidden_act, head, n_layers=None) -> GradCase:
    n_layers = n_layers or int(rng.integers(2, 5))
    dims = rng.integers(1, 11, size=n_layers + 1).tolist()
    out_act, loss = head
    if out_act is Activation.SOFTMAX:
        dims[-1] = max(dims[-1], 2)
    specs = [LayerSpec(dims[i], dims[i + 1], out_act if i == n_layers - 1 else hidden_act)
             for i in range(n_layers)]
    net = init_weights(specs, int(rng.integers(2**31)))
    for w in net.weights:
        w[-1] = rng.normal(0, 0.3, size=w.shape[1])
    batch = int(rng.integers(1, 7))
    x = rng.normal(size=(batch, dims[0]))
    y = _targets(rng, loss, batch, dims[-1], out_act)
    name = f"net[{'-'.join(map(str, dims))}] {hidden_act.value}->{out_act.value}/{loss.value}"
    return GradCase(name,
                    lambda: loss_value(loss, forward(net, x).prediction, y),
                    lambda: backward(net, forward(net, x), loss, y),
                    net.weights)


def mtl_case(rng) -> GradCase:
    """All three sub-losses at weight 1 through the shared encoder/decoder."""
    x_dim, x_code, y_code, y_dim = (int(v) for v in rng.integers(2, 9, size=4))
    hidden = tuple(int(v) for v in rng.integers(2, 9, size=int(rng.integers(0, 2))))
    net = MtlNetwork.build(x_dim, x_code, hidden, y_code, y_dim, int(rng.integers(2**31)))
    n_s, n_f, n_l = (int(v) for v in rng.integers(1, 4, size=3))
    xs, x_only = rng.uniform(size=(n_s, x_dim)), rng.uniform(size=(n_f, x_dim))
    ys, y_only = rng.uniform(-1, 1, size=(n_s, y_dim)), rng.uniform(-1, 1, size=(n_l, y_dim))
    batch = MiniBatch(xs, ys, x_only, y_only)
    batch = MiniBatch(xs, ys, x_only, y_only, corrupt_input(batch.x_all, 0.2, rng))
    lambdas = (1.0, 1.0, 1.0)

    def grads():
        _, g = mtl_criterion(net, batch, lambdas, want_grads=True)
        return [x for n in SEGMENTS for x in g[n]]

    return GradCase(f"mtl[{x_dim}-{x_code}-{hidden}-{y_code}-{y_dim}]",
                    lambda: mtl_criterion(net, batch, lambdas)[0].J, grads, net.params())


def hint_case(rng, measure) -> GradCase:
    """Cross-entropy plus hint penalty on a random hidden layer."""
    measure = Dissimilarity(measure)
    n_layers = int(rng.integers(2, 5))
    dims = [int(v) for v in rng.integers(2, 11, size=n_layers + 1)]
    # tanh spreads AS representations away from the parallel (cosine 1) singularity
    hidden = Activation.TANH if measure is Dissimilarity.AS else \
        (Activation.SIGMOID, Activation.TANH)[int(rng.integers(2))]
    specs = [LayerSpec(dims[i], dims[i + 1],
                       Activation.SOFTMAX if i == n_layers - 1 else hidden)
             for i in range(n_layers)]
    net = init_weights(specs, int(rng.integers(2**31)))
    batch = int(rng.integers(3, 7))
    x = rng.normal(size=(batch, dims[0]))
    labels = rng.integers(0, 2, size=batch)
    labels[:2] = 0  # at least one class with two members
    y = one_hot(labels, dims[-1])
    cfg = HintConfig(int(rng.integers(1, n_layers)), measure, gamma=1.0, lam=1.0)
    k = cfg.layer_index

    def loss():
        trace = forward(net, x)
        return (cfg.gamma * loss_value(Loss.CROSS_ENTROPY, trace.prediction, y)
                + cfg.lam * hint_penalty(trace.outputs[k], labels, measure))

    def grads():
        sup = backward(net, forward(net, x), Loss.CROSS_ENTROPY, y)
        _, hint = hint_gradients(net, x, labels, cfg)
        return [cfg.gamma * s + (cfg.lam * hint[i] if i < k else 0.0) for i, s in enumerate(sup)]

    return GradCase(f"hint[{measure.value} h{k} {'-'.join(map(str, dims))}]", loss, grads,
                    net.weights)


def random_cases(n_cases=50, seed=0) -> list[GradCase]:
    """Every hidden-activation / head pairing first, then composite losses, then random draws."""
    rng = np.random.default_rng(seed)
    cases = [network_case(rng, h, head) for h, head in itertools.product(HIDDEN_ACTS, OUTPUT_HEADS)]
    cases += [mtl_case(rng), mtl_case(rng)]
    cases += [hint_case(rng, m) for m in Dissimilarity for _ in range(2)]
    while len(cases) < n_cases:
        pick = int(rng.integers(3))
        if pick == 0:
            cases.append(network_case(rng, HIDDEN_ACTS[int(rng.integers(4))],
                                      OUTPUT_HEADS[int(rng.integers(5))]))
        elif pick == 1:
            cases.append(mtl_case(rng))
        else:
            cases.append(hint_case(rng, list(Dissimilarity)[int(rng.integers(3))]))
    return cases


def run_gradcheck(n_cases=50, seed=0):
    """Return ``[(case name, max relative error), ...]``."""
    return [(c.name, c.check()) for c in random_cases(n_cases, seed)]
