import math

import numpy as np
import pytest

from isslstm.lstm import (
    ArchitectureSpec,
    LayerParams,
    LayerState,
    NetworkParams,
    NetworkState,
    forward,
    init_params,
    layer_step,
    network_step,
    param_count,
    simulate,
    zero_params,
    zero_state,
)
from isslstm.numerics import DomainError, sigmoid

from .conftest import random_layer


def _scalar_zero_layer():
    z = np.zeros((1, 1))
    return LayerParams.from_gates(
        W_f=z, W_i=z, W_o=z, W_g=z, R_f=z, R_i=z, R_o=z, R_g=z,
        b_f=np.zeros(1), b_i=np.zeros(1), b_o=np.zeros(1), b_g=np.zeros(1),
    )


def _random_net(rng, hidden=(3, 4), n_u=2, n_y=2, scale=0.7):
    arch = ArchitectureSpec(n_u, n_y, hidden)
    layers = tuple(random_layer(rng, n, m, scale) for m, n in zip(arch.layer_inputs(), arch.hidden))
    return NetworkParams(layers, rng.normal(size=(n_y, hidden[-1])), rng.normal(size=n_y))


def test_scalar_zero_layer_step():
    s, gates = layer_step(_scalar_zero_layer(), LayerState(np.array([1.0]), np.array([0.0])), np.array([0.0]))
    assert s.c[0] == 0.5
    assert s.h[0] == pytest.approx(0.231059, abs=1e-6)
    assert s.h[0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-16)
    assert gates.f[0] == gates.i[0] == gates.o[0] == 0.5 and gates.g[0] == 0.0


def test_zero_layer_keeps_zero_state():
    s, _ = layer_step(_scalar_zero_layer(), LayerState(np.zeros(1), np.zeros(1)), np.array([3.7]))
    assert s.c[0] == 0.0 and s.h[0] == 0.0


def test_layer_step_dimension_mismatch():
    p = _scalar_zero_layer()
    with pytest.raises(DomainError):
        layer_step(p, LayerState(np.zeros(1), np.zeros(1)), np.zeros(2))


def test_layer_step_matches_hand_formulas(rng):
    p = random_layer(rng, 4, 3)
    s = LayerState(rng.normal(size=4), rng.uniform(-1, 1, 4))
    u = rng.normal(size=3)
    z = [p.W[j] @ u + p.R[j] @ s.h + p.b[j] for j in range(4)]
    f, i, o = (1 / (1 + np.exp(-zz)) for zz in z[:3])
    g = np.tanh(z[3])
    c = f * s.c + i * g
    s2, _ = layer_step(p, s, u)
    np.testing.assert_allclose(s2.c, c, rtol=1e-14)
    np.testing.assert_allclose(s2.h, o * np.tanh(c), rtol=1e-14)


def test_gate_properties_expose_blocks(rng):
    p = random_layer(rng, 2, 3)
    np.testing.assert_array_equal(p.W_g, p.W[3])
    np.testing.assert_array_equal(p.R_i, p.R[1])
    np.testing.assert_array_equal(p.b_o, p.b[2])


def test_network_output_bias_passthrough():
    arch = ArchitectureSpec(1, 1, (2, 3))
    zp = zero_params(arch)
    params = NetworkParams(zp.layers, zp.W_y, np.array([3.0]))
    _, y = network_step(params, zero_state(params), np.array([0.4]))
    assert y.tolist() == [3.0]


def test_single_layer_network_is_layer_step_plus_readout():
    p = _scalar_zero_layer()
    net = NetworkParams((p,), np.array([[2.0]]), np.array([-1.0]))
    st = NetworkState((LayerState(np.array([1.0]), np.array([0.0])),))
    _, y = network_step(net, st, np.array([0.0]))
    assert y[0] == pytest.approx(2 * 0.5 * math.tanh(0.5) - 1.0, abs=1e-15)


def test_output_sensitive_to_input(rng):
    net = _random_net(rng)
    x0 = zero_state(net)
    u = rng.normal(size=2)
    _, y0 = network_step(net, x0, u)
    _, y1 = network_step(net, x0, u + np.array([1e-6, 0.0]))
    assert np.max(np.abs(y1 - y0)) > 1e-9


def test_simulate_equals_manual_composition(rng):
    net = _random_net(rng, hidden=(3, 3))
    U = rng.uniform(-1, 1, (25, 2))
    Y, traj = simulate(net, zero_state(net), U)
    assert len(Y) == len(traj) == 25
    st = zero_state(net)
    for k in range(25):
        s1, _ = layer_step(net.layers[0], st.per_layer[0], U[k])
        s2, _ = layer_step(net.layers[1], st.per_layer[1], s1.h)
        st = NetworkState((s1, s2))
        np.testing.assert_allclose(net.W_y @ s2.h + net.b_y, Y[k], rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(traj[k].per_layer[1].c, s2.c, rtol=1e-13, atol=1e-14)


def test_zero_network_constant_output(rng):
    arch = ArchitectureSpec(3, 2, (4,))
    zp = zero_params(arch)
    net = NetworkParams(zp.layers, zp.W_y, np.array([0.5, -2.0]))
    out = forward(net, rng.normal(size=(12, 3))).outputs
    assert out.shape == (12, 2)
    assert np.all(out == np.array([0.5, -2.0]))


def test_forward_rejects_wrong_channel_count(rng):
    net = _random_net(rng)
    with pytest.raises(DomainError):
        forward(net, np.zeros((5, 3)))


def test_simulation_is_deterministic(rng):
    net = _random_net(rng)
    U = rng.normal(size=(30, 2))
    a = forward(net, U).outputs
    b = forward(net, U).outputs
    assert np.array_equal(a, b)


def test_hidden_state_and_cell_recursion_bounds(rng):
    worst = 0.0
    for _ in range(10_000 // 20):
        n, m = rng.integers(1, 6), rng.integers(1, 4)
        p = random_layer(rng, n, m, scale=rng.uniform(0.1, 5.0))
        s = LayerState(rng.normal(0, 3, n), rng.uniform(-0.999, 0.999, n))
        for _ in range(20):
            s2, g = layer_step(p, s, rng.normal(0, 3, m))
            assert np.all(np.abs(s2.h) < 1.0)
            bound = np.max(np.abs(g.f)) * np.max(np.abs(s.c)) + np.max(np.abs(g.i)) * np.max(np.abs(g.g))
            assert np.max(np.abs(s2.c)) <= bound * (1 + 1e-15)
            worst = max(worst, np.max(np.abs(s2.h)))
            s = s2
    assert worst < 1.0


def test_init_params_contract():
    arch = ArchitectureSpec(7, 12, (88, 33, 68))
    a = init_params(arch, 3)
    b = init_params(arch, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    assert all(np.all(l.b == 0) for l in a.layers) and np.all(a.b_y == 0)
    for l, (m, n) in zip(a.layers, zip(arch.layer_inputs(), arch.hidden)):
        r = 1 / math.sqrt(m + n)
        assert np.max(np.abs(l.W)) <= r and np.max(np.abs(l.R)) <= r
    assert a.size() == param_count(arch) == 78468


def test_zero_sized_layer_rejected():
    with pytest.raises(DomainError):
        ArchitectureSpec(7, 12, (16, 0))


def test_flatten_roundtrip(rng):
    net = _random_net(rng)
    v = net.flatten()
    back = net.with_flat(v)
    assert all(np.array_equal(x, y) for x, y in zip(net.arrays(), back.arrays()))


def test_zero_state_decay_below_geometric_envelope(rng):
    from isslstm.iss import layer_condition
    from .conftest import random_stable_layer

    p = random_stable_layer(rng, 4, 2)
    p = LayerParams(p.W, p.R, np.concatenate([p.b[:3], np.zeros((1, 4))]))
    rho = layer_condition(p, np.ones(2)).condition_value
    s = LayerState(rng.normal(0, 2, 4), rng.uniform(-0.9, 0.9, 4))
    x0 = max(np.max(np.abs(s.c)), np.max(np.abs(s.h)))
    for k in range(1, 60):
        s, _ = layer_step(p, s, np.zeros(2))
        xk = max(np.max(np.abs(s.c)), np.max(np.abs(s.h)))
        assert xk <= rho**k * x0 * (1 + 1e-12)
