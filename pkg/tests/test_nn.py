"""Dense layers, activations, dropout, Adam, and the gradient checker."""

import numpy as np
import pytest

from robod.errors import ConfigError, ShapeError, StateError
from robod.nn import (IDENTITY, LEAKY_RELU, RELU, SIGMOID, Activation,
                      AdamState, DenseLayer, DropoutSpec, adam_step,
                      dense_backward, dense_forward, dropout_apply,
                      grad_check, init_weight, mse_loss)
from robod.rng import Rng


def test_activation_values():
    x = np.array([[-2.0, 0.0, 3.0]])
    assert LEAKY_RELU.apply(x).tolist() == [[-0.02, 0.0, 3.0]]
    assert RELU.apply(x).tolist() == [[0.0, 0.0, 3.0]]
    assert IDENTITY.apply(x).tolist() == [[-2.0, 0.0, 3.0]]
    sig = SIGMOID.apply(np.array([[0.0, -40.0, 40.0]]))
    assert sig[0, 0] == 0.5
    assert 0.0 <= sig[0, 1] < 1e-17
    assert sig[0, 2] >= 1.0 - 1e-15


def test_activation_grad_from_output():
    out = SIGMOID.apply(np.array([[0.3, -1.2]]))
    assert np.allclose(SIGMOID.grad_from_output(out), out * (1 - out),
                       rtol=0, atol=1e-15)
    hidden = np.array([[2.0, -0.5]])
    assert LEAKY_RELU.grad_from_output(hidden).tolist() == [[1.0, 0.01]]
    assert RELU.grad_from_output(hidden).tolist() == [[1.0, 0.0]]
    assert IDENTITY.grad_from_output(hidden).tolist() == [[1.0, 1.0]]


def test_zero_preserving_flags():
    assert LEAKY_RELU.zero_preserving and RELU.zero_preserving
    assert IDENTITY.zero_preserving
    assert not SIGMOID.zero_preserving
    with pytest.raises(ConfigError):
        Activation("tanhish")


def test_init_weight_bounds_and_shape():
    w = init_weight(16, 9, Rng(4))
    assert w.shape == (16, 9)
    bound = 1.0 / 4.0
    assert w.min() >= -bound and w.max() < bound
    # row-major draw order: same stream reshaped matches
    flat = Rng(4).uniform(-bound, bound, 16 * 9)
    assert np.array_equal(w, flat.reshape(16, 9))


def test_dense_identity_passthrough():
    layer = DenseLayer(3, 3, weight=np.eye(3), bias=np.zeros(3))
    x = np.array([[1.0, -2.0, 0.5]])
    assert np.array_equal(dense_forward(layer, x, IDENTITY), x)


def test_dense_known_affine():
    layer = DenseLayer(2, 1, weight=np.array([[1.0], [1.0]]),
                       bias=np.array([0.5]))
    x = np.array([[1.0, 2.0]])
    assert dense_forward(layer, x, IDENTITY).tolist() == [[3.5]]
    out = dense_forward(layer, x, SIGMOID)
    assert out[0, 0] == pytest.approx(1.0 / (1.0 + np.exp(-3.5)), abs=1e-15)


def test_dense_backward_requires_forward_and_shapes():
    layer = DenseLayer(2, 2, rng=Rng(0))
    with pytest.raises(StateError):
        dense_backward(layer, np.ones((1, 2)))
    dense_forward(layer, np.ones((3, 2)), LEAKY_RELU)
    with pytest.raises(ShapeError):
        dense_backward(layer, np.ones((2, 2)))
    with pytest.raises(ShapeError):
        dense_forward(layer, np.ones((3, 4)), LEAKY_RELU)


@pytest.mark.parametrize("act", [IDENTITY, LEAKY_RELU, SIGMOID, RELU])
def test_dense_gradients_match_finite_differences(act):
    rng = Rng(31)
    layer = DenseLayer(4, 3, rng=rng)
    layer.bias = rng.uniform(-0.5, 0.5, 3)
    x = rng.uniform(-1.0, 1.0, 5 * 4).reshape(5, 4)
    target = rng.uniform(0.0, 1.0, 5 * 3).reshape(5, 3)

    def closure():
        out = dense_forward(layer, x, act)
        diff = out - target
        loss = float((diff * diff).sum())
        _, gw, gb = dense_backward(layer, 2.0 * diff)
        return loss, [gw, gb]

    report = grad_check(closure, [layer.weight, layer.bias])
    assert report["passed"], report


def test_grad_check_catches_a_corrupted_gradient():
    rng = Rng(32)
    layer = DenseLayer(3, 2, rng=rng)
    x = rng.uniform(-1.0, 1.0, 4 * 3).reshape(4, 3)

    def closure():
        out = dense_forward(layer, x, IDENTITY)
        loss = float((out * out).sum())
        _, gw, gb = dense_backward(layer, 2.0 * out)
        gw = gw * 1.05  # deliberate 5% error
        return loss, [gw, gb]

    report = grad_check(closure, [layer.weight, layer.bias])
    assert not report["passed"]


def test_adam_first_step_is_signed_lr():
    p = np.array([0.0])
    state = AdamState(lr=0.01)
    adam_step(state, [p], [np.array([3.0])])
    # bias-corrected first step reduces to lr * sign(grad) up to eps
    assert p[0] == pytest.approx(-0.01, rel=1e-6)
    q = np.array([0.0])
    state2 = AdamState(lr=0.01)
    adam_step(state2, [q], [np.array([-3.0])])
    assert q[0] == pytest.approx(0.01, rel=1e-6)


def test_adam_converges_on_quadratic():
    w = np.array([10.0])
    state = AdamState(lr=0.05)
    for _ in range(2000):
        adam_step(state, [w], [2.0 * (w - 3.0)])
    assert abs(w[0] - 3.0) < 0.01


def test_adam_weight_decay_is_coupled_and_flag_gated():
    p = np.array([1.0])
    state = AdamState(lr=0.01, weight_decay=0.1)
    adam_step(state, [p], [np.zeros(1)])
    # zero raw gradient still moves the parameter through the decay term
    assert p[0] < 1.0
    q = np.array([1.0])
    state2 = AdamState(lr=0.01, weight_decay=0.1)
    adam_step(state2, [q], [np.zeros(1)], decay_flags=[False])
    assert q[0] == 1.0


def test_adam_lr_zero_freezes_parameters():
    rng = Rng(8)
    p = rng.uniform(-1.0, 1.0, 6)
    before = p.copy()
    state = AdamState(lr=0.0, weight_decay=0.01)
    adam_step(state, [p], [rng.uniform(-1.0, 1.0, 6)])
    assert np.array_equal(p, before)


def test_adam_shape_validation():
    state = AdamState(lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(state, [np.zeros(2)], [np.zeros(3)])


def test_dropout_inactive_is_identity_and_draws_nothing():
    rng = Rng(12)
    before = rng.seed_state
    x = np.ones((3, 3))
    out = dropout_apply(DropoutSpec(rate=0.0), x, rng)
    assert out is x
    assert rng.seed_state == before
    out2 = dropout_apply(DropoutSpec(rate=0.5, training=False), x, rng)
    assert out2 is x
    assert rng.seed_state == before


def test_dropout_scaling_and_mean_preservation():
    rng = Rng(13)
    x = np.ones((250, 400))
    out = dropout_apply(DropoutSpec(rate=0.5), x, rng)
    values = set(np.unique(out).tolist())
    assert values == {0.0, 2.0}  # inverted scaling: kept entries are 1/(1-p)
    assert abs(out.mean() - 1.0) < 0.02


def test_dropout_rate_validation():
    with pytest.raises(ConfigError):
        DropoutSpec(rate=1.0)
    with pytest.raises(ConfigError):
        DropoutSpec(rate=-0.1)


def test_mse_loss_values():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert mse_loss(x, x) == 0.0
    xhat = x + 1.0  # squared error 2 per row
    assert mse_loss(x, xhat) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ShapeError):
        mse_loss(x, np.ones((3, 2)))


def test_dense_layer_construction_validation():
    with pytest.raises(ConfigError):
        DenseLayer(2, 2)  # neither weight nor rng
    with pytest.raises(ShapeError):
        DenseLayer(2, 2, weight=np.ones((3, 2)))
    with pytest.raises(ShapeError):
        DenseLayer(2, 2, weight=np.ones((2, 2)), bias=np.ones(3))
    with pytest.raises(ConfigError):
        DenseLayer(0, 2, rng=Rng(0))
