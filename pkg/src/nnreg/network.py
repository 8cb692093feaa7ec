"""Dense feedforward networks with hand-written backpropagation.

Weights of layer ``k`` are stored as one ``(fan_in + 1, fan_out)`` matrix whose
last row is the bias, so a layer computes ``phi([a | 1] @ W)``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_math import (Activation, Loss, ShapeError, activation_derivative,
                        apply_activation, as_matrix, check_one_hot,
                        loss_gradient)

CHECKPOINT_MAGIC = b"NNRG"
CHECKPOINT_VERSION = 1
_ACT_CODES = {a: i for i, a in enumerate(Activation)}


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Activation = Activation.SIGMOID

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self}")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass
class Network:
    specs: list[LayerSpec]
    weights: list[np.ndarray]

    def __post_init__(self):
        check_chain(self.specs)
        if len(self.weights) != len(self.specs):
            raise ShapeError("one weight matrix per layer is required")
        for spec, w in zip(self.specs, self.weights):
            if w.shape != (spec.input_dim + 1, spec.output_dim):
                raise ShapeError(f"weight shape {w.shape} does not fit {spec}")

    @property
    def n_layers(self) -> int:
        return len(self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].output_dim

    def copy(self) -> "Network":
        return Network(list(self.specs), [w.copy() for w in self.weights])


@dataclass
class ForwardTrace:
    """``outputs[0]`` is the input batch; ``outputs[k]`` / ``pre[k-1]`` are layer k's."""
    outputs: list[np.ndarray]
    pre: list[np.ndarray] = field(default_factory=list)

    @property
    def prediction(self) -> np.ndarray:
        return self.outputs[-1]


def check_chain(specs) -> None:
    if not specs:
        raise ValueError("a network needs at least one layer")
    for k, spec in enumerate(specs):
        if spec.activation is Activation.SOFTMAX and k != len(specs) - 1:
            raise ValueError("softmax is only allowed on the output layer")
        if k and specs[k - 1].output_dim != spec.input_dim:
            raise ShapeError(
                f"layer {k} expects {spec.input_dim} inputs but layer {k - 1} "
                f"emits {specs[k - 1].output_dim}")


def make_specs(dims, hidden="sigmoid", output="sigmoid") -> list[LayerSpec]:
    """Specs for a chain ``dims[0] -> dims[1] -> ... -> dims[-1]``."""
    n = len(dims) - 1
    return [LayerSpec(dims[i], dims[i + 1], output if i == n - 1 else hidden)
            for i in range(n)]


def init_weights(specs, seed) -> Network:
    """Uniform Glorot initialization with zero bias rows."""
    specs = list(specs)
    check_chain(specs)
    rng = np.random.default_rng(seed)
    weights = []
    for spec in specs:
        bound = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        w = np.zeros((spec.input_dim + 1, spec.output_dim))
        w[:-1] = rng.uniform(-bound, bound, size=(spec.input_dim, spec.output_dim))
        weights.append(w)
    return Network(specs, weights)


def forward(net: Network, batch) -> ForwardTrace:
    a = as_matrix(batch)
    if a.shape[1] != net.input_dim:
        raise ShapeError(f"batch has {a.shape[1]} columns, network expects {net.input_dim}")
    trace = ForwardTrace(outputs=[a])
    for spec, w in zip(net.specs, net.weights):
        z = a @ w[:-1] + w[-1]
        a = apply_activation(spec.activation, z)
        trace.pre.append(z)
        trace.outputs.append(a)
    return trace


def predict(net: Network, batch) -> np.ndarray:
    return forward(net, batch).prediction


def output_delta(net: Network, trace: ForwardTrace, loss, target) -> np.ndarray:
    """Gradient of the batch-mean loss w.r.t. the output pre-activation."""
    loss = Loss(loss)
    target = as_matrix(target)
    out_act = net.specs[-1].activation
    pred = trace.prediction
    if target.shape != pred.shape:
        raise ShapeError(f"target {target.shape} does not match output {pred.shape}")
    if out_act is Activation.SOFTMAX:
        if loss is not Loss.CROSS_ENTROPY:
            raise ValueError("softmax output requires cross-entropy loss")
        check_one_hot(target)
        return (pred - target) / max(pred.shape[0], 1)
    if loss is Loss.CROSS_ENTROPY:
        raise ValueError("cross-entropy requires a softmax output layer")
    return loss_gradient(loss, pred, target) * activation_derivative(out_act, trace.pre[-1])


def backprop_from(net: Network, trace: ForwardTrace, layer: int, delta, need_input=True):
    """Backpropagate ``delta`` = dJ/dz at layer ``layer`` (1-based) down to the input.

    Returns ``(grads, d_input)`` where ``grads`` holds one matrix for each of
    layers ``1..layer`` and ``d_input`` is dJ/d(input batch).
    """
    if len(trace.outputs) != net.n_layers + 1:
        raise ValueError("trace was not produced by this network")
    if not 1 <= layer <= net.n_layers:
        raise IndexError(f"layer {layer} outside 1..{net.n_layers}")
    grads = [None] * layer
    dz = delta
    da = None
    for k in range(layer - 1, -1, -1):
        a_prev = trace.outputs[k]
        w = net.weights[k]
        g = np.empty_like(w)
        g[:-1] = a_prev.T @ dz
        g[-1] = dz.sum(axis=0)
        grads[k] = g
        if k == 0 and not need_input:
            break
        da = dz @ w[:-1].T
        if k:
            dz = da * activation_derivative(net.specs[k - 1].activation, trace.pre[k - 1])
    return grads, da


def backprop_output(net: Network, trace: ForwardTrace, d_output):
    """Backpropagate dJ/d(prediction) through the whole network (non-softmax output)."""
    act = net.specs[-1].activation
    if act is Activation.SOFTMAX:
        raise NotImplementedError("softmax outputs must go through output_delta")
    dz = as_matrix(d_output) * activation_derivative(act, trace.pre[-1])
    return backprop_from(net, trace, net.n_layers, dz)


def backward(net: Network, trace: ForwardTrace, loss, target) -> list[np.ndarray]:
    grads, _ = backprop_from(net, trace, net.n_layers,
                             output_delta(net, trace, loss, target), need_input=False)
    return grads


def layer_output(net: Network, batch, layer_index: int) -> np.ndarray:
    """Post-activation of layer ``layer_index`` (1-based, output layer allowed)."""
    if not 1 <= layer_index <= net.n_layers:
        raise IndexError(f"layer {layer_index} outside 1..{net.n_layers}")
    a = as_matrix(batch)
    for spec, w in zip(net.specs[:layer_index], net.weights[:layer_index]):
        a = apply_activation(spec.activation, a @ w[:-1] + w[-1])
    return a


def hidden_representation(net: Network, batch, layer_index: int) -> np.ndarray:
    if not 1 <= layer_index <= net.n_layers - 1:
        raise IndexError(f"hidden layer {layer_index} outside 1..{net.n_layers - 1}")
    return layer_output(net, batch, layer_index)


# -- checkpoints -------------------------------------------------------------

def save_binary(net: Network, path) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, net.n_layers)]
    for spec in net.specs:
        parts.append(struct.pack("<IIB", spec.input_dim, spec.output_dim,
                                 _ACT_CODES[spec.activation]))
    for w in net.weights:
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_binary(path) -> Network:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    version, n = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    acts = list(Activation)
    specs = []
    for _ in range(n):
        i, o, code = struct.unpack_from("<IIB", raw, pos)
        pos += 9
        specs.append(LayerSpec(i, o, acts[code]))
    weights = []
    for spec in specs:
        count = (spec.input_dim + 1) * spec.output_dim
        w = np.frombuffer(raw, dtype="<f8", count=count, offset=pos)
        weights.append(w.reshape(spec.input_dim + 1, spec.output_dim).astype(np.float64))
        pos += 8 * count
    if pos != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes")
    return Network(specs, weights)


def to_json(net: Network) -> str:
    doc = {
        "format": "nnreg-network",
        "version": CHECKPOINT_VERSION,
        "layers": [{"input_dim": s.input_dim, "output_dim": s.output_dim,
                    "activation": s.activation.value} for s in net.specs],
        "weights": [w.tolist() for w in net.weights],
    }
    return json.dumps(doc)


def from_json(text: str) -> Network:
    doc = json.loads(text)
    if doc.get("format") != "nnreg-network":
        raise ValueError("not a network document")
    specs = [LayerSpec(d["input_dim"], d["output_dim"], d["activation"]) for d in doc["layers"]]
    return Network(specs, [np.array(w, dtype=np.float64) for w in doc["weights"]])
