import time

import numpy as np
import pytest

from nnreg.core_math import Activation, Loss, ShapeError, apply_activation, one_hot, sigmoid
from nnreg.gradcheck import network_case
from nnreg.network import (LayerSpec, Network, backward, forward, from_json,
                           hidden_representation, init_weights, load_binary, make_specs,
                           output_delta, save_binary, to_json)


def test_init_is_deterministic_with_zero_bias():
    specs = make_specs([5, 4, 3])
    a, b = init_weights(specs, 7), init_weights(specs, 7)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
        assert np.all(wa[-1] == 0)


def test_init_weight_mean_near_zero():
    net = init_weights(make_specs([100, 100]), 3)
    assert abs(net.weights[0][:-1].mean()) < 1e-2


def test_init_rejects_broken_chain():
    with pytest.raises(ShapeError):
        init_weights([LayerSpec(3, 4), LayerSpec(5, 2)], 0)


def test_softmax_only_on_output():
    with pytest.raises(ValueError):
        init_weights([LayerSpec(3, 4, "softmax"), LayerSpec(4, 2)], 0)


def test_identity_layer_passes_input_through():
    w = np.vstack([np.eye(3), np.zeros((1, 3))])
    net = Network([LayerSpec(3, 3, "identity")], [w])
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(forward(net, x).prediction, x)


def test_zero_sigmoid_layer_outputs_half():
    net = Network([LayerSpec(4, 2)], [np.zeros((5, 2))])
    assert np.all(forward(net, np.ones((3, 4))).prediction == 0.5)


def test_forward_matches_scalar_loop():
    rng = np.random.default_rng(0)
    net = init_weights(make_specs([4, 3, 2], "tanh", "sigmoid"), 1)
    net.weights[0][-1] = rng.normal(size=3)
    x = rng.normal(size=(5, 4))
    expected = np.zeros((5, 2))
    for n in range(5):
        h = []
        for j in range(3):
            z = net.weights[0][-1, j]
            for i in range(4):
                z += x[n, i] * net.weights[0][i, j]
            h.append(np.tanh(z))
        for j in range(2):
            z = net.weights[1][-1, j]
            for i in range(3):
                z += h[i] * net.weights[1][i, j]
            expected[n, j] = 1 / (1 + np.exp(-z))
    np.testing.assert_allclose(forward(net, x).prediction, expected, rtol=1e-12)


def test_forward_shape_mismatch():
    net = init_weights(make_specs([4, 2]), 0)
    with pytest.raises(ShapeError):
        forward(net, np.ones((2, 3)))


def test_trace_length():
    net = init_weights(make_specs([4, 3, 3, 2]), 0)
    assert len(forward(net, np.ones((2, 4))).outputs) == net.n_layers + 1


def test_zero_gradient_at_target():
    net = init_weights(make_specs([3, 4, 2]), 0)
    x = np.random.default_rng(0).normal(size=(4, 3))
    trace = forward(net, x)
    for g in backward(net, trace, Loss.MSE, trace.prediction.copy()):
        assert np.all(g == 0)


@pytest.mark.parametrize("hidden", ["sigmoid", "tanh", "relu", "identity"])
@pytest.mark.parametrize("head", [("sigmoid", "mse"), ("tanh", "mse"), ("relu", "mse"),
                                  ("identity", "mse"), ("softmax", "cross_entropy")])
def test_backward_matches_finite_differences(hidden, head):
    rng = np.random.default_rng(hash((hidden, head)) % 2**32)
    for _ in range(3):
        case = network_case(rng, Activation(hidden), (Activation(head[0]), Loss(head[1])))
        assert case.check() < 1e-5, case.name


def test_softmax_cross_entropy_delta_is_p_minus_y():
    rng = np.random.default_rng(4)
    net = init_weights(make_specs([3, 5], output="softmax"), 0)
    x = rng.normal(size=(4, 3))
    y = one_hot([0, 4, 2, 2], 5)
    trace = forward(net, x)
    z = x @ net.weights[0][:-1] + net.weights[0][-1]
    e = np.exp(z - z.max(axis=1, keepdims=True))
    direct = (e / e.sum(axis=1, keepdims=True) - y) / 4
    np.testing.assert_allclose(output_delta(net, trace, Loss.CROSS_ENTROPY, y), direct, atol=1e-12)


def test_backward_does_not_mutate_network():
    net = init_weights(make_specs([3, 4, 2]), 0)
    before = [w.copy() for w in net.weights]
    x = np.ones((2, 3))
    backward(net, forward(net, x), Loss.MSE, np.zeros((2, 2)))
    assert all(np.array_equal(a, b) for a, b in zip(before, net.weights))


def test_hidden_representation():
    net = init_weights(make_specs([6, 5, 4, 3, 2], output="softmax"), 0)
    x = np.random.default_rng(1).normal(size=(3, 6))
    trace = forward(net, x)
    h3 = hidden_representation(net, x, 3)
    assert h3.shape == (3, 3)
    assert np.array_equal(h3, trace.outputs[3])
    with pytest.raises(IndexError):
        hidden_representation(net, x, 4)
    with pytest.raises(IndexError):
        hidden_representation(net, x, 0)


def test_hidden_representation_of_affine_layer():
    net = init_weights([LayerSpec(3, 2, "identity"), LayerSpec(2, 2, "sigmoid")], 0)
    x = np.random.default_rng(2).normal(size=(4, 3))
    w = net.weights[0]
    np.testing.assert_allclose(hidden_representation(net, x, 1), x @ w[:-1] + w[-1])


def test_backprop_cost_roughly_linear_in_depth():
    def timed(n_layers):
        net = init_weights(make_specs([64] * (n_layers + 1)), 0)
        x = np.ones((32, 64))
        y = np.zeros((32, 64))
        start = time.perf_counter()
        for _ in range(30):
            backward(net, forward(net, x), Loss.MSE, y)
        return time.perf_counter() - start

    timed(4)
    assert timed(8) <= 2.5 * timed(4) + 0.02


def test_checkpoint_round_trips(tmp_path):
    net = init_weights(make_specs([5, 4, 3], "tanh", "softmax"), 9)
    net.weights[1][-1] = [0.1, -0.2, 1 / 3]
    save_binary(net, tmp_path / "a.bin")
    back = load_binary(tmp_path / "a.bin")
    assert back.specs == net.specs
    for a, b in zip(net.weights, back.weights):
        assert a.tobytes() == b.tobytes()
    again = from_json(to_json(net))
    assert all(a.tobytes() == b.tobytes() for a, b in zip(net.weights, again.weights))
    save_binary(back, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_binary(p)


def test_sigmoid_layer_uses_bias_row():
    net = Network([LayerSpec(1, 1)], [np.array([[0.0], [2.0]])])
    assert forward(net, [[5.0]]).prediction[0, 0] == sigmoid(np.array([2.0]))[0]
    assert apply_activation("identity", [[1.0]])[0, 0] == 1.0
