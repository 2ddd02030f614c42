import numpy as np
import pytest

from pnplab.errors import ConfigurationError
from pnplab.net import NetConfig, VectorFieldNet
from pnplab.optim import AdamState, optimizer_step
from pnplab.rng import RngStream


def make_net():
    cfg = NetConfig(grid_shape=(1, 1, 1, 2), hidden=(4,), time_features=1)
    return VectorFieldNet.initialize(cfg, RngStream(5))


def test_zero_gradients_leave_parameters():
    net = make_net()
    before = [p.copy() for p in net.params]
    state = AdamState.for_net(net, lr=0.1)
    optimizer_step(state, net, [np.zeros_like(p) for p in net.params])
    assert state.step_count == 1
    for a, b in zip(before, net.params):
        assert np.array_equal(a, b)


def test_descent_direction_on_scalar_quadratic():
    # f(w) = w^2 from w=1 with lr=0.1: one step must decrease w.
    net = make_net()
    net.params[0][:] = 0.0
    net.params[0][0, 0] = 1.0
    state = AdamState.for_net(net, lr=0.1)
    grads = [np.zeros_like(p) for p in net.params]
    grads[0][0, 0] = 2.0 * net.params[0][0, 0]
    optimizer_step(state, net, grads)
    assert net.params[0][0, 0] < 1.0


def scalar_adam_reference(w0, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    # Independent scalar implementation of the same update rule.
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        w -= lr * (m / (1 - beta1**t)) / (np.sqrt(v / (1 - beta2**t)) + eps)
    return w


def test_quadratic_converges_and_matches_scalar_reference():
    net = make_net()
    for p in net.params:
        p[:] = 0.0
    net.params[0][0, 0] = 1.0
    state = AdamState.for_net(net, lr=0.1)
    for _ in range(500):
        grads = [np.zeros_like(p) for p in net.params]
        grads[0][0, 0] = 2.0 * net.params[0][0, 0]
        optimizer_step(state, net, grads)
    w_ref = scalar_adam_reference(1.0, 0.1, 500)
    assert abs(net.params[0][0, 0]) < 1e-3
    assert net.params[0][0, 0] == pytest.approx(w_ref, abs=1e-12)
    assert state.step_count == 500


def test_shape_mismatch_rejected():
    net = make_net()
    state = AdamState.for_net(net)
    bad = [np.zeros_like(p) for p in net.params]
    bad[0] = np.zeros((1, 1))
    with pytest.raises(ConfigurationError):
        optimizer_step(state, net, bad)
    with pytest.raises(ConfigurationError):
        optimizer_step(state, net, bad[:-1])
