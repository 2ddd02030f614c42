import math

import numpy as np
import pytest

from pnplab.errors import ConfigurationError, UsageError
from pnplab.grid import Grid
from pnplab.net import NetConfig, VectorFieldNet, evaluate_field, time_features
from pnplab.rng import RngStream


def small_config(**kw):
    defaults = dict(grid_shape=(1, 1, 1, 2), hidden=(8, 8), time_features=2)
    defaults.update(kw)
    return NetConfig(**defaults)


def test_zero_net_outputs_zero():
    net = VectorFieldNet.zeros(small_config())
    z = Grid(np.array([[[[1.3, -0.7]]]]))
    assert np.array_equal(net.evaluate(z, 0.3).data, np.zeros((1, 1, 1, 2)))


def test_tiny_net_hand_arithmetic():
    # One scalar input, one sin/cos time pair, one hidden tanh unit.
    # At t=0 the time features are (sin 0, cos 0) = (0, 1), so with
    # W1=[0.2, -0.1, 0.3], b1=0.1, w2=0.5, b2=-0.05 and z=0.5:
    #   pre = 0.2*0.5 + (-0.1)*0 + 0.3*1 + 0.1 = 0.5
    #   out = 0.5*tanh(0.5) - 0.05
    cfg = NetConfig(grid_shape=(1, 1, 1, 1), hidden=(1,), time_features=1)
    params = [
        np.array([[0.2], [-0.1], [0.3]]),
        np.array([0.1]),
        np.array([[0.5]]),
        np.array([-0.05]),
    ]
    net = VectorFieldNet(cfg, params)
    out = net.evaluate(Grid(np.array([[[[0.5]]]])), 0.0)
    expected = 0.5 * math.tanh(0.5) - 0.05
    assert out.data[0, 0, 0, 0] == pytest.approx(expected, abs=1e-15)


def test_evaluation_is_pure():
    net = VectorFieldNet.initialize(small_config(), RngStream(3))
    z = Grid(np.array([[[[0.2, 0.4]]]]))
    a = net.evaluate(z, 0.7)
    b = net.evaluate(z, 0.7)
    assert a == b


def test_shape_mismatch_is_configuration_error():
    net = VectorFieldNet.initialize(small_config(), RngStream(3))
    with pytest.raises(ConfigurationError):
        net.evaluate(Grid.zeros((1, 1, 1, 3)), 0.5)


def test_time_outside_unit_interval_rejected():
    net = VectorFieldNet.initialize(small_config(), RngStream(3))
    with pytest.raises(UsageError):
        net.evaluate(Grid.zeros((1, 1, 1, 2)), 1.5)


def test_time_features_layout():
    f = time_features(0.25, 2)[0]
    # pairs at frequencies 2pi and 4pi: sin/cos of pi/2 then pi
    assert f == pytest.approx([1.0, 0.0, 0.0, -1.0], abs=1e-12)


def test_output_matches_grid_shape_batched():
    cfg = small_config(grid_shape=(2, 3, 2, 1))
    net = VectorFieldNet.initialize(cfg, RngStream(1))
    z = RngStream(2).normal((5, 2, 3, 2, 1))
    out = net.forward(z, 0.3)
    assert out.shape == z.shape


def test_loss_zero_at_target_and_quadratic_scaling():
    net = VectorFieldNet.zeros(small_config())
    z = RngStream(0).normal((4, 2))
    t = np.full(4, 0.5)
    zero_target = np.zeros((4, 2))
    loss, grads = net.loss_and_gradients(z, t, zero_target)
    assert loss == 0.0
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads)
    v = np.ones((4, 2))
    loss1, _ = net.loss_and_gradients(z, t, v)
    loss2, _ = net.loss_and_gradients(z, t, 2.0 * v)
    assert loss2 == pytest.approx(4.0 * loss1, rel=1e-12)


def test_loss_value_single_sample():
    # Zero net, one sample with target (2, 0): loss = ||(0,0)-(2,0)||^2 = 4.
    net = VectorFieldNet.zeros(small_config())
    loss, _ = net.loss_and_gradients(np.zeros((1, 2)), np.array([0.5]), np.array([[2.0, 0.0]]))
    assert loss == 4.0


def test_empty_batch_rejected():
    net = VectorFieldNet.zeros(small_config())
    with pytest.raises(UsageError):
        net.loss_and_gradients(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)))


def finite_difference(net, param_idx, flat_idx, z, t, v, cond, h=1e-5):
    p = net.params[param_idx]
    orig = p.reshape(-1)[flat_idx]
    p.reshape(-1)[flat_idx] = orig + h
    plus, _ = net.loss_and_gradients(z, t, v, cond)
    p.reshape(-1)[flat_idx] = orig - h
    minus, _ = net.loss_and_gradients(z, t, v, cond)
    p.reshape(-1)[flat_idx] = orig
    return (plus - minus) / (2.0 * h)


@pytest.mark.parametrize("activation", ["tanh", "silu"])
def test_gradients_match_central_differences(activation):
    # 100 random (net, sample) pairs, 10 random parameters each.
    rng = np.random.default_rng(2024)
    for trial in range(100):
        conditional = trial % 3 == 0
        cfg = NetConfig(
            grid_shape=(1, 1, 1, 2),
            hidden=(6, 5),
            activation=activation,
            time_features=2,
            num_classes=3 if conditional else 0,
            cond_dim=4,
            time_gated_skip=trial % 4 == 1,
        )
        net = VectorFieldNet.initialize(cfg, RngStream(1000 + trial))
        z = rng.normal(size=(2, 2))
        t = rng.uniform(0.05, 0.95, size=2)
        v = rng.normal(size=(2, 2))
        cond = rng.integers(0, 4, size=2) if conditional else None
        _, grads = net.loss_and_gradients(z, t, v, cond)
        for _ in range(10):
            pi = int(rng.integers(0, len(net.params)))
            fi = int(rng.integers(0, net.params[pi].size))
            analytic = grads[pi].reshape(-1)[fi]
            numeric = finite_difference(net, pi, fi, z, t, v, cond)
            denom = max(abs(numeric), 1e-8)
            assert abs(analytic - numeric) / denom < 1e-4, (
                f"trial {trial} param {pi}[{fi}]: {analytic} vs {numeric}"
            )


def test_flatten_round_trip():
    cfg = small_config(num_classes=2, cond_dim=3)
    net = VectorFieldNet.initialize(cfg, RngStream(8))
    flat = net.flatten_params()
    rebuilt = VectorFieldNet.from_flat(cfg, flat)
    for a, b in zip(net.params, rebuilt.params):
        assert np.array_equal(a, b)
    with pytest.raises(ConfigurationError):
        VectorFieldNet.from_flat(cfg, flat[:-1])


def test_null_condition_is_reserved_row():
    cfg = small_config(num_classes=2, cond_dim=3)
    net = VectorFieldNet.initialize(cfg, RngStream(8))
    z = np.zeros((1, 2))
    out_null = net.forward(z, 0.5, None)
    out_explicit = net.forward(z, 0.5, net.null_cond_id)
    assert np.array_equal(out_null, out_explicit)
    out_class = net.forward(z, 0.5, 0)
    assert not np.array_equal(out_null, out_class)
    with pytest.raises(ConfigurationError):
        net.forward(z, 0.5, 3)  # beyond the null id


def test_unconditional_net_rejects_condition():
    net = VectorFieldNet.zeros(small_config())
    with pytest.raises(ConfigurationError):
        net.forward(np.zeros((1, 2)), 0.5, 1)


def test_evaluate_field_wrapper():
    net = VectorFieldNet.zeros(small_config())
    z = Grid.zeros((1, 1, 1, 2))
    assert evaluate_field(net, z, 0.1) == net.evaluate(z, 0.1)


def test_time_gated_skip_path():
    # Zero MLP, gate read off time features: at t=0 the features are
    # (sin 0, cos 0) = (0, 1), so w_skip=[0, g] makes the output g*z.
    cfg = NetConfig(grid_shape=(1, 1, 1, 2), hidden=(4,), time_features=1, time_gated_skip=True)
    net = VectorFieldNet.zeros(cfg)
    assert net.skip_gate is not None and net.skip_gate.shape == (2,)
    net.skip_gate[:] = [0.0, -2.5]
    z = np.array([[0.4, -1.0]])
    out = net.forward(z, 0.0)
    assert np.allclose(out, -2.5 * z)
    # A freshly initialized gate starts closed: pure-MLP behaviour.
    init = VectorFieldNet.initialize(cfg, RngStream(4))
    plain = VectorFieldNet(
        NetConfig(grid_shape=(1, 1, 1, 2), hidden=(4,), time_features=1),
        init.params[:-1],
    )
    assert np.array_equal(init.forward(z, 0.3), plain.forward(z, 0.3))
