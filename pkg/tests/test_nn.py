import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bundle_uq import nn


def _net(rng, sizes=(3, 5, 4, 2)):
    net = nn.init_params(list(sizes), rng)
    return net.map(lambda a: a + 0.1 * rng.standard_normal(a.shape))


def _loss(net, x, cv, ct):
    """Scalar loss touching both outputs and their time tangents."""
    tape = nn.record(net, x, 0)
    return float(np.sum(cv * tape.values ** 2) + np.sum(ct * tape.output_tangents ** 2))


def _analytic_grad(net, x, cv, ct):
    tape = nn.record(net, x, 0)
    g = nn.backprop(net, tape, 2 * cv * tape.values, 2 * ct * tape.output_tangents)
    return g.flatten()


def _fd_grad(net, x, cv, ct, h=1e-6):
    flat = net.flatten()
    out = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        out[i] = (_loss(net.unflatten(flat + e), x, cv, ct)
                  - _loss(net.unflatten(flat - e), x, cv, ct)) / (2 * h)
    return out


def test_forward_shapes_and_linear_output():
    rng = np.random.default_rng(0)
    net = _net(rng)
    y = nn.forward(net, rng.standard_normal((7, 3)))
    assert y.shape == (7, 2)
    # single row is promoted to a batch of one
    assert nn.forward(net, np.zeros(3)).shape == (1, 2)
    with pytest.raises(nn.ShapeError):
        nn.forward(net, np.zeros((4, 2)))


def test_glorot_limits_and_zero_bias():
    rng = np.random.default_rng(1)
    net = nn.init_params([4, 16, 3], rng)
    assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 20)
    assert np.abs(net.weights[1]).max() <= np.sqrt(6 / 19)
    assert all(np.all(b == 0) for b in net.biases)


def test_time_tangent_matches_finite_difference():
    rng = np.random.default_rng(2)
    net = _net(rng)
    x = rng.standard_normal((6, 3))
    dual = nn.forward_with_time_derivative(net, x, 0)
    h = 1e-6
    e = np.zeros(3)
    e[0] = h
    fd = (nn.forward(net, x + e) - nn.forward(net, x - e)) / (2 * h)
    np.testing.assert_allclose(dual.tangents, fd, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(dual.values, nn.forward(net, x))


@pytest.mark.parametrize("seed", range(3))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = _net(rng)
    x = rng.standard_normal((5, 3))
    cv, ct = rng.standard_normal((2, 5, 2))
    np.testing.assert_allclose(_analytic_grad(net, x, cv, ct), _fd_grad(net, x, cv, ct),
                               rtol=1e-5, atol=1e-8)


def test_backprop_values_only_path():
    rng = np.random.default_rng(5)
    net = _net(rng)
    x = rng.standard_normal((4, 3))
    tape = nn.record(net, x)
    g = nn.backprop(net, tape, np.ones((4, 2))).flatten()
    flat = net.flatten()
    h = 1e-6
    fd = np.array([(nn.forward(net.unflatten(flat + h * e), x).sum()
                    - nn.forward(net.unflatten(flat - h * e), x).sum()) / (2 * h)
                   for e in np.eye(flat.size)])
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_backprop_rejects_foreign_tape():
    rng = np.random.default_rng(6)
    a, b = _net(rng), _net(rng)
    tape = nn.record(a, np.zeros((1, 3)))
    with pytest.raises(ValueError):
        nn.backprop(b, tape, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        nn.backprop(a, tape, np.zeros((1, 2)), np.zeros((1, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_flatten_roundtrip(seed):
    net = _net(np.random.default_rng(seed), (2, 3, 1))
    back = net.unflatten(net.flatten())
    np.testing.assert_array_equal(back.flatten(), net.flatten())


def test_forward_many_matches_loop():
    rng = np.random.default_rng(7)
    net = _net(rng)
    thetas = net.flatten() + 0.05 * rng.standard_normal((4, net.n_params))
    x = rng.standard_normal((6, 3))
    out = nn.forward_many(net, thetas, x)
    want = np.stack([nn.forward(net.unflatten(t), x) for t in thetas])
    np.testing.assert_allclose(out, want, rtol=1e-13, atol=1e-14)


def test_adam_first_step_is_lr_times_sign():
    rng = np.random.default_rng(8)
    net = _net(rng, (2, 3, 1))
    grads = net.map(lambda a: rng.standard_normal(a.shape))
    state = nn.AdamState.for_params(net, lr=0.01)
    state, new = nn.adam_step(state, net, grads)
    step = new.flatten() - net.flatten()
    np.testing.assert_allclose(step, -0.01 * np.sign(grads.flatten()), rtol=1e-5)
    assert state.step == 1
    with pytest.raises(FloatingPointError):
        nn.adam_step(state, net, grads.map(lambda a: a * np.nan))


def test_flat_adam_minimises_quadratic():
    opt = nn.FlatAdam(3, lr=0.05)
    x = np.array([2.0, -1.0, 0.5])
    for _ in range(2000):
        x = opt.update(x, 2 * x)
    np.testing.assert_allclose(x, 0, atol=1e-3)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    net = _net(rng)
    path = nn.save_checkpoint(tmp_path / "c.json", net, "lcdm", 3, 10, note="x")
    back, meta = nn.load_checkpoint(path)
    np.testing.assert_array_equal(back.flatten(), net.flatten())
    assert meta["seed"] == 3 and meta["iterations_trained"] == 10 and meta["note"] == "x"
