import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeonet.nn import (
    AdamState,
    DenseLayer,
    DenseNet,
    NotDifferentiableError,
    ShapeError,
    StaleCacheError,
    Trainer,
    adam_step,
    cross_entropy_loss,
    mse_loss,
)


def numeric_grads(net, x, y, eps=1e-6):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + eps
            lp, _ = mse_loss(net(x), y)
            p[i] = old - eps
            lm, _ = mse_loss(net(x), y)
            p[i] = old
            g[i] = (lp - lm) / (2 * eps)
        out.append(g)
    return out


def test_identity_layer_passes_input():
    net = DenseNet([DenseLayer(np.eye(3), np.zeros(3), "identity")])
    np.testing.assert_array_equal(net([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_relu_sign_split():
    net = DenseNet([DenseLayer([[1.0], [-1.0]], [0.0, 0.0], "relu")])
    np.testing.assert_array_equal(net([2.0]), [2.0, 0.0])


def test_two_layers_match_hand_product():
    w1 = np.array([[1.0, 2.0], [-1.0, 0.5]])
    b1 = np.array([0.5, -3.0])
    w2 = np.array([[2.0, -1.0], [0.0, 1.0]])
    b2 = np.array([1.0, 1.0])
    net = DenseNet([DenseLayer(w1, b1, "relu"), DenseLayer(w2, b2, "identity")])
    x = np.array([1.0, 1.0])
    # hidden = relu([3.5, -4.5]) = [3.5, 0]; out = [7 + 1, 0 + 1]
    np.testing.assert_allclose(net(x), [8.0, 1.0])


def test_heaviside_threshold():
    layer = DenseLayer(np.eye(2), np.zeros(2), "heaviside", threshold=0.5)
    np.testing.assert_array_equal(DenseNet([layer])([0.5, 0.49]), [1.0, 0.0])


def test_single_layer_gradient_closed_form():
    w = np.array([[0.3, -0.2], [0.1, 0.4]])
    b = np.array([0.05, -0.1])
    net = DenseNet([DenseLayer(w.copy(), b.copy(), "identity")])
    x = np.array([1.5, -0.5])
    y = np.array([0.2, 0.7])
    out, cache = net.forward(x[None, :])
    _, g = mse_loss(out, y[None, :])
    grads, _ = net.backward(g, cache)
    r = w @ x + b - y
    # mean over the two outputs halves the textbook 2 r x^T
    np.testing.assert_allclose(grads[0], 2 * np.outer(r, x) / 2)
    np.testing.assert_allclose(grads[1], 2 * r / 2)


def test_zero_upstream_gradient():
    net = DenseNet.build(3, [4, 2], rng=0)
    _, cache = net.forward(np.ones((2, 3)))
    grads, gin = net.backward(np.zeros((2, 2)), cache)
    assert all(not g.any() for g in grads)
    assert not gin.any()


def test_finite_differences_small_net():
    # 2 -> 1 -> 1: two weights and a bias, then one weight and a bias
    net = DenseNet([DenseLayer([[0.7, -0.4]], [0.2], "relu"), DenseLayer([[1.3]], [-0.1], "identity")])
    assert net.n_params() == 5
    x = np.array([[0.9, -0.3]])
    y = np.array([[0.4]])
    out, cache = net.forward(x)
    _, g = mse_loss(out, y)
    grads, _ = net.backward(g, cache)
    for a, n in zip(grads, numeric_grads(net, x, y)):
        np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_finite_differences_random_nets(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 4))
    widths = [int(w) for w in rng.integers(1, 5, size=depth)]
    net = DenseNet.build(int(rng.integers(1, 4)), widths, "relu", "identity", rng)
    for layer in net.layers:
        layer.biases[:] = rng.normal(size=layer.biases.shape)
    x = rng.normal(size=(3, net.input_dim))
    y = rng.normal(size=(3, net.output_dim))
    out, cache = net.forward(x)
    _, g = mse_loss(out, y)
    grads, _ = net.backward(g, cache)
    for a, n in zip(grads, numeric_grads(net, x, y)):
        np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-7)


def test_input_gradient():
    net = DenseNet.build(3, [5, 2], rng=3)
    x = np.array([[0.3, -0.2, 0.9]])
    out, cache = net.forward(x)
    _, g = mse_loss(out, np.zeros_like(out))
    _, gin = net.backward(g, cache)
    eps = 1e-6
    for j in range(3):
        xp, xm = x.copy(), x.copy()
        xp[0, j] += eps
        xm[0, j] -= eps
        num = (mse_loss(net(xp), np.zeros((1, 2)))[0] - mse_loss(net(xm), np.zeros((1, 2)))[0]) / (2 * eps)
        assert gin[0, j] == pytest.approx(num, rel=1e-5, abs=1e-9)


def test_stale_cache_rejected():
    net = DenseNet.build(2, [2], rng=0)
    out, cache = net.forward(np.ones((1, 2)))
    trainer = Trainer.create([net])
    trainer.step([np.ones_like(p) for p in net.params()])
    with pytest.raises(StaleCacheError):
        net.backward(np.ones_like(out), cache)


def test_heaviside_not_differentiable():
    net = DenseNet.build(2, [2], "relu", "heaviside", rng=0)
    out, cache = net.forward(np.ones((1, 2)))
    with pytest.raises(NotDifferentiableError):
        net.backward(np.ones_like(out), cache)


def test_shape_errors():
    with pytest.raises(ShapeError):
        DenseNet([DenseLayer(np.ones((2, 3)), np.zeros(2)), DenseLayer(np.ones((1, 3)), np.zeros(1))])
    with pytest.raises(ShapeError):
        DenseNet.build(3, [2], rng=0)(np.ones(4))


def test_mse_values():
    assert mse_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    assert mse_loss([1.0, 2.0], [0.0, 0.0])[0] == 2.5


def test_cross_entropy_uniform():
    loss, grad = cross_entropy_loss(np.zeros(10), 3)
    assert loss == pytest.approx(math.log(10), abs=1e-12)
    assert grad.sum() == pytest.approx(0.0, abs=1e-15)


def test_cross_entropy_bad_class():
    with pytest.raises(IndexError):
        cross_entropy_loss(np.zeros(3), 5)


def test_adam_zero_gradient_is_a_no_op():
    p = [np.array([1.0, -2.0])]
    state = AdamState.for_params(p, lr=0.1)
    adam_step(p, [np.zeros(2)], state)
    np.testing.assert_allclose(p[0], [1.0, -2.0], atol=1e-12)


def test_adam_first_step():
    p = [np.array([0.0])]
    state = AdamState.for_params(p, lr=0.1)
    adam_step(p, [np.array([1.0])], state)
    # m_hat = v_hat = 1 after bias correction
    assert p[0][0] == pytest.approx(-0.1 / (1.0 + 1e-8), rel=1e-12)


def test_adam_descends_quadratic():
    w = [np.array([1.0])]
    state = AdamState.for_params(w, lr=0.01)
    trace = []
    for _ in range(100):
        adam_step(w, [2 * w[0]], state)
        trace.append(abs(w[0][0]))
    tail = np.array(trace[5:])
    assert np.all(np.diff(tail) <= 0)
    assert trace[-1] < 0.5


def test_checkpoint_roundtrip(tmp_path):
    net = DenseNet.build(4, [3, 2], "relu", "heaviside", rng=1)
    net.layers[-1].threshold = 0.25
    path = tmp_path / "net.json"
    net.save(path, role="test")
    back = DenseNet.load(path)
    assert back.to_dict("test") == net.to_dict("test")
    x = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(back(x), net(x))
