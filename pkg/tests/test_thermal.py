import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isslstm import thermal as th
from isslstm.numerics import DomainError


@pytest.fixture(scope="module")
def tp():
    return th.default_params()


@pytest.fixture(scope="module")
def d(tp):
    return th.discretize(tp)


def constant_inputs(n, w=(0.0, 0.0, 0.0, 0.0), V_g=230.0, d_p=0, d_f=40.0):
    return [th.PlantInput(tuple(w), V_g, d_p, d_f)] * n


# --- discretization ---------------------------------------------------------------

def test_filter_pole_one_time_constant():
    assert abs(th.filter_pole(30.0, 30.0) - 0.367879441171) < 1e-9
    assert th.filter_pole(30.0, 30.0) == math.exp(-1.0)


def test_default_template_is_hurwitz_with_margin(tp):
    assert tp.hurwitz_margin() <= -1e-4
    eig = np.linalg.eigvals(tp.A_TT).real
    taus = -1.0 / eig
    assert taus.min() >= 60.0 and taus.max() <= 1800.0


def test_discrete_spectral_radius_below_one(d):
    assert th.spectral_radius(d) < 1.0


def test_discrete_state_matrix_is_block_upper_triangular(d):
    Phi, _ = th.state_matrices(d)
    assert np.all(Phi[:2, 2:] == 0)
    assert np.all(Phi[14:, :14] == 0)
    assert np.all(Phi[14:26, 26:] == 0) and np.all(Phi[26:, 14:26] == 0)


def test_parameter_budget():
    assert th.default_template().n_identifiable() == 74
    assert th.N_STATE == 38


def test_non_hurwitz_rejected(tp):
    bad = th.ThermalParams(**{**tp.__dict__, "A_TT": -tp.A_TT})
    with pytest.raises(DomainError, match="Hurwitz"):
        th.discretize(bad)


@pytest.mark.parametrize("name", ["tau_q", "tau_p", "tau_f"])
def test_nonpositive_time_constant_rejected(tp, name):
    v = getattr(tp, name).copy()
    v[0] = 0.0
    with pytest.raises(DomainError):
        th.ThermalParams(**{**tp.__dict__, name: v})


def test_unit_dc_gain_after_21_time_constants():
    # after n steps from rest: x_n = gain * v * (1 - a^n)
    a = th.filter_pole(30.0, 30.0)
    x, gain, v = 0.0, 2.5, 3.0
    for _ in range(21):
        x = a * x + (1 - a) * gain * v
    assert abs(x - gain * v) <= 1e-9 * gain * v * 3
    assert x == pytest.approx(gain * v * (1 - math.exp(-21.0)), rel=1e-14)


# --- plant step --------------------------------------------------------------------

def test_equilibrium_is_fixed_point(d):
    s = th.equilibrium_state(d)
    for _ in range(50):
        s, y = th.plant_step(d, s, constant_inputs(1)[0])
        np.testing.assert_allclose(y, d.T_a, rtol=1e-13)
    np.testing.assert_allclose(s.vector(), th.equilibrium_state(d).vector(), atol=1e-12)


def test_output_is_read_before_update(d):
    s0 = th.ThermalState(np.zeros(2), np.full(12, 30.0), np.ones(12), np.full(12, 0.5))
    s1, y = th.plant_step(d, s0, constant_inputs(1, w=(1, 1, 1, 1))[0])
    np.testing.assert_array_equal(y, np.full(12, 31.5))
    np.testing.assert_array_equal(s1.output, s1.T + s1.dT_p + s1.dT_f)


def test_heat_flow_steady_state(tp, d):
    w, V_g = (0.8, 0.4, 0.6, 0.3), 225.0
    s = th.equilibrium_state(d)
    for _ in range(int(40 * max(tp.tau_q) / tp.T_s)):
        s, _ = th.plant_step(d, s, th.PlantInput(w, V_g, 0, 40.0))
    V2 = V_g**2 * np.array(w)
    expected = np.array([2 * V2[0] + V2[1], 2 * V2[2] + V2[3]]) / tp.R_heat
    np.testing.assert_allclose(s.q_f, expected, rtol=1e-9)


def test_simulate_matches_plant_step(d):
    inputs = th.gen_signals("closed_loop_like", 7200.0, 3)
    Y, X = th.simulate_plant(d, inputs)
    s = th.equilibrium_state(d)
    for k, u in enumerate(inputs[:60]):
        s, y = th.plant_step(d, s, u)
        np.testing.assert_allclose(y, Y[k], rtol=1e-12)
        np.testing.assert_allclose(s.vector(), X[k + 1], rtol=1e-12, atol=1e-12)


def _random_uV(rng, n):
    return np.column_stack([
        rng.uniform(0, 240.0**2, (n, 4)), rng.uniform(15, 30, n), rng.integers(0, 2, n), rng.uniform(0, 20, n),
    ])


def _run_linear(d, x0, UV):
    x = x0.copy()
    out = []
    for uv in UV:
        out.append(x[2:14] + x[14:26] + x[26:])
        x = th.linear_step(d, x, uv)
    return np.array(out)


def test_superposition_in_transformed_input(d):
    rng = np.random.default_rng(7)
    n = 240
    x1, x2 = rng.uniform(-5, 5, 38), rng.uniform(-5, 5, 38)
    U1, U2 = _random_uV(rng, n), _random_uV(rng, n)
    a, b = 0.7, -1.3
    lhs = _run_linear(d, a * x1 + b * x2, a * U1 + b * U2)
    rhs = a * _run_linear(d, x1, U1) + b * _run_linear(d, x2, U2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


def _rk4_reference(tp, inputs, substeps=100):
    """Integrate the continuous model on a T_s/substeps grid with inputs held."""
    heat = th.ZONE_WIRING / tp.R_heat

    def f(x, V, dp, dfd):
        q, T, p, fan = x[:2], x[2:14], x[14:26], x[26:]
        return np.concatenate([
            (heat @ V - q) / tp.tau_q,
            tp.A_TT @ T + tp.B_q_T @ q + tp.b_T * tp.T_a,
            (tp.mu_p * dp - p) / tp.tau_p,
            (tp.mu_f * dfd - fan) / tp.tau_f,
        ])

    x = np.concatenate([np.zeros(2), np.full(12, tp.T_a), np.zeros(24)])
    h = tp.T_s / substeps
    Y = []
    for u in inputs:
        Y.append(x[2:14] + x[14:26] + x[26:])
        V = u.V_g**2 * np.array(u.w)
        args = (V, u.d_p, u.d_f - tp.f_ref)
        for _ in range(substeps):
            k1 = f(x, *args)
            k2 = f(x + 0.5 * h * k1, *args)
            k3 = f(x + 0.5 * h * k2, *args)
            k4 = f(x + h * k3, *args)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.array(Y)


def test_zoh_matches_fine_grid_integration(tp, d):
    inputs = th.gen_signals("closed_loop_like", 7200.0, 11)
    Y, _ = th.simulate_plant(d, inputs)
    ref = _rk4_reference(tp, inputs)
    assert np.max(np.abs(Y - ref) / np.abs(ref)) <= 1e-6


def test_zone_two_responds_with_delay(d):
    n = 60
    inputs = constant_inputs(n)
    inputs[0] = th.PlantInput((1.0, 1.0, 0.0, 0.0), 240.0, 0, 40.0)
    Y, _ = th.simulate_plant(d, inputs)
    rise = Y - d.T_a
    z1, z2 = rise[:, 3], rise[:, 9]
    assert z2.max() > 0
    assert np.argmax(z2) > np.argmax(z1)
    # first-sample response in zone 2 is far smaller than in zone 1
    assert rise[2, 6:].max() < 0.1 * rise[2, :6].max()


def _steady_output(d, uV):
    Phi, Gam = th.state_matrices(d)
    x = np.linalg.solve(np.eye(38) - Phi, Gam @ uV)
    return x[2:14] + x[14:26] + x[26:]


@settings(max_examples=40)
@given(
    w=st.lists(st.floats(0, 0.9), min_size=4, max_size=4),
    channel=st.integers(0, 3),
    bump=st.floats(0.01, 0.1),
    d_f=st.floats(40, 60),
)
def test_monotone_heating(d, w, channel, bump, d_f):
    base = th.PlantInput(tuple(w), 230.0, 0, d_f)
    more = list(w)
    more[channel] += bump
    hi = th.PlantInput(tuple(more), 230.0, 0, d_f)
    y0 = _steady_output(d, th.transformed_input(base, d.T_a, d.f_ref))
    y1 = _steady_output(d, th.transformed_input(hi, d.T_a, d.f_ref))
    assert np.all(y1 >= y0 - 1e-9)


@pytest.mark.parametrize(
    "u",
    [
        th.PlantInput((1.1, 0, 0, 0), 230.0, 0, 40.0),
        th.PlantInput((0, 0, 0, 0), 0.0, 0, 40.0),
        th.PlantInput((0, 0, 0, 0), 230.0, 2, 40.0),
        th.PlantInput((0, 0, 0, 0), 230.0, 0, 61.0),
        th.PlantInput((0, 0, 0), 230.0, 0, 40.0),
    ],
)
def test_invalid_input_rejected(d, u):
    with pytest.raises(DomainError):
        th.plant_step(d, th.equilibrium_state(d), u)


def test_temperatures_span_tens_of_degrees(d):
    Y, _ = th.simulate_plant(d, constant_inputs(600, w=(1, 1, 1, 1), V_g=240.0))
    assert 10.0 <= (Y[-1] - d.T_a).max() <= 200.0


# --- signals -------------------------------------------------------------------------

def test_lfsr_is_maximal_length():
    bits = th.lfsr_bits(7, 2 * 127, 1)
    assert np.array_equal(bits[:127], bits[127:])
    assert bits[:127].sum() == 64


def test_prbs_two_levels_per_channel():
    U = th.inputs_to_array(th.gen_signals("prbs", 7200.0, 5))
    for c in range(4):
        assert len(np.unique(U[:, c])) == 2


def test_sample_count():
    assert len(th.gen_signals("steps", 7200.0, 0)) == 240
    assert th.sample_count(7.5 * 3600) == 900


@pytest.mark.parametrize("duration", [3600.0, 8 * 3600.0, 7215.0])
def test_invalid_duration(duration):
    with pytest.raises(DomainError):
        th.gen_signals("steps", duration, 0)


def test_unknown_kind():
    with pytest.raises(DomainError):
        th.gen_signals("sine", 7200.0, 0)


@pytest.mark.parametrize("kind", th.SIGNAL_KINDS)
def test_signals_deterministic_and_valid(kind):
    a = th.gen_signals(kind, 9000.0, 42)
    assert a == th.gen_signals(kind, 9000.0, 42)
    assert a != th.gen_signals(kind, 9000.0, 43)
    for u in a:
        th.validate_input(u)


def test_packs_hold_duty_cycles_constant():
    U = th.inputs_to_array(th.gen_signals("packs", 7200.0, 1))
    assert np.all(U[:, :4] == U[0, :4])
    assert set(np.unique(U[:, 5])) == {0.0, 1.0}


def test_mixed_profile_varies_all_inputs():
    U = th.inputs_to_array(th.gen_signals("closed_loop_like", 7200.0, 1))
    assert np.all(U.std(axis=0) > 0)


# --- benchmark --------------------------------------------------------------------------

def test_benchmark_split_sizes():
    ds = th.make_benchmark(0)
    assert (len(ds.train), len(ds.val), len(ds.test)) == (9, 2, 1)
    ids = [s.id for s in ds.sequences]
    assert len(set(ids)) == 12
    for which in ("train", "val", "test"):
        assert any(ds.kinds[s.id] == "closed_loop_like" for s in ds.subset(which))


def test_benchmark_noise_free_matches_simulation():
    ds = th.make_benchmark(3, noise_sigma=0.0, hours=(2.0,))
    d = th.discretize(th.default_params())
    for s in ds.sequences:
        Y, _ = th.simulate_plant(d, th.array_to_inputs(s.inputs))
        np.testing.assert_array_equal(s.outputs, Y - d.T_a)


def test_benchmark_deterministic():
    a, b = th.make_benchmark(5, hours=(2.0,)), th.make_benchmark(5, hours=(2.0,))
    for x, y in zip(a.sequences, b.sequences):
        assert np.array_equal(x.outputs, y.outputs) and np.array_equal(x.inputs, y.inputs)


def test_template_yaml_round_trip(tmp_path):
    tpl = th.default_template()
    path = tmp_path / "t.yaml"
    th.save_template(tpl, path)
    assert th.load_template(path) == tpl
    p1, p2 = th.load_params(path), th.default_params()
    np.testing.assert_array_equal(p1.A_TT, p2.A_TT)


def test_template_unknown_key(tmp_path):
    path = tmp_path / "t.yaml"
    path.write_text("R_heat: 10\nbogus: 1\n")
    with pytest.raises(DomainError, match="bogus"):
        th.load_template(path)
