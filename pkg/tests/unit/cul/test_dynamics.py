import math
import numpy as np
import pytest
from scipy.signal import cont2discrete

from common.rng import rng_stream
from cul import dynamics
from cul.dynamics import X_B, X_E, X_G, PlantParams, UncertaintyRanges
from cul.errors import InvalidParamsError


def test_dead_zone_cases():
    assert dynamics.dead_zone(0.001, 0.005) == 0.0
    assert dynamics.dead_zone(0.01, 0.005) == pytest.approx(0.0075, abs=1e-15)
    assert dynamics.dead_zone(-0.01, 0.005) == pytest.approx(-0.0075, abs=1e-15)
    for d in (-0.3, -1e-9, 0.0, 2e-4, 5.0):
        assert dynamics.dead_zone(d, 0.0) == d


def test_dead_zone_is_odd_and_continuous_at_edges():
    for d in np.linspace(-0.01, 0.01, 101):
        assert dynamics.dead_zone(-d, 0.005) == -dynamics.dead_zone(d, 0.005)
    edge = 0.0025
    assert abs(dynamics.dead_zone(edge + 1e-12, 0.005)) < 1e-11
    assert dynamics.dead_zone(edge - 1e-12, 0.005) == 0.0


def test_nominal_params_defaults():
    p = PlantParams.nominal()
    assert (p.k_c, p.k_g, p.k_d) == (660.0, 5.3e4, 2.2e4)
    assert (p.m_e, p.m_g, p.m_b) == (1.04, 0.039, 0.232)
    assert (p.c_d, p.c_c, p.c_cl, p.c_g) == (12.5, 0.1, 1.5, 36.0)
    assert p.delta == 0.005


def test_params_validation_and_unknown_keys():
    with pytest.raises(InvalidParamsError, match="m_b"):
        PlantParams.nominal().replace(m_b=0.0).validate()
    with pytest.raises(InvalidParamsError, match="c_d"):
        PlantParams.nominal().replace(c_d=-1.0).validate()
    with pytest.raises(InvalidParamsError, match="bogus"):
        PlantParams.from_dict({"bogus": 1.0})
    assert PlantParams.from_dict({"m_b": 0.3}).m_b == 0.3


def test_ranges_reject_inverted_interval():
    with pytest.raises(InvalidParamsError, match="m_e"):
        UncertaintyRanges(m_e=(2.0, 1.0))


def test_zero_state_is_equilibrium(nominal):
    assert np.array_equal(dynamics.plant_accel(dynamics.rest_state(), 0.0, 0.0, nominal), np.zeros(3))
    out = dynamics.step_plant(dynamics.rest_state(), 0.0, 0.0, nominal, 0.006)
    assert np.array_equal(out, np.zeros(6))


def test_static_force_balance_has_zero_acceleration(linear_nominal):
    p, u = linear_nominal, 0.66
    s = np.zeros(6)
    s[X_B] = u / p.k_c
    s[X_G] = s[X_B] + u / p.k_d
    s[X_E] = s[X_G] + u / p.k_g
    assert np.allclose(dynamics.plant_accel(s, u, 0.0, p), 0.0, atol=1e-9)


def test_body_decouples_inside_dead_zone(nominal):
    s = np.zeros(6)
    s[X_B] = 0.002
    s[X_G] = 0.003   # 0.001 relative, inside +-0.0025
    s[X_E] = 0.003
    acc = dynamics.plant_accel(s, 0.0, 0.0, nominal)
    assert acc[2] == pytest.approx(-nominal.k_c * 0.002 / nominal.m_b, rel=1e-12)


def test_disturbance_enters_like_the_input(nominal):
    s = np.array([0.001, 0.0, -0.002, 0.1, 0.0, 0.3])
    a = dynamics.step_plant(s, 3.0, 2.0, nominal, 0.006)
    b = dynamics.step_plant(s, 5.0, 0.0, nominal, 0.006)
    assert np.array_equal(a, b)


def test_step_plant_rejects_bad_arguments(nominal):
    with pytest.raises(ValueError):
        dynamics.step_plant(dynamics.rest_state(), 0.0, 0.0, nominal, 0.0)
    with pytest.raises(ValueError):
        dynamics.step_plant(dynamics.rest_state(), 0.0, 0.0, nominal, 0.006, substeps=0)


def test_step_plant_nonfinite_raises(nominal):
    from cul.errors import NonFiniteError
    with pytest.raises(NonFiniteError):
        dynamics.step_plant(dynamics.rest_state(), 1e308, 1e308, nominal, 0.006)


def test_constant_force_settles_at_static_gain(linear_nominal):
    # slowest mode decays at (C_cl + C_C) / (2 * total mass), about 0.6 1/s
    s = dynamics.rest_state()
    for _ in range(3000):
        s = dynamics.step_plant(s, 0.66, 0.0, linear_nominal, 0.006)
    assert s[X_B] == pytest.approx(0.001, abs=1e-6)


def test_rk4_one_step_converges_at_fourth_order(linear_nominal):
    s = np.array([0.002, 0.001, -0.001, 0.05, -0.2, 0.1])
    ref = dynamics.step_plant(s, 10.0, 0.0, linear_nominal, 0.006, substeps=800)
    err_h = np.max(np.abs(dynamics.step_plant(s, 10.0, 0.0, linear_nominal, 0.006, substeps=40) - ref))
    err_h2 = np.max(np.abs(dynamics.step_plant(s, 10.0, 0.0, linear_nominal, 0.006, substeps=80) - ref))
    assert err_h2 < err_h
    assert err_h / err_h2 >= 12.0


def test_linearization_output_row_selects_body(model):
    x = np.arange(1.0, 7.0)
    assert model.output(x) == x[X_B]
    assert model.a.shape == (6, 6) and model.b1.shape == (6, 1) and model.b2.shape == (6, 1)
    assert np.allclose(model.b1, model.b2, rtol=1e-12, atol=0.0)


def test_linearization_matches_scipy_zoh(nominal):
    a, b = dynamics.continuous_matrices(nominal)
    c = np.zeros((1, 6))
    c[0, X_B] = 1.0
    ad, bd, _, _, _ = cont2discrete((a, b, c, np.zeros((1, 1))), 0.006, method="zoh")
    model = dynamics.linearize_nominal(nominal, 0.006)
    assert np.allclose(model.a, ad, rtol=1e-10, atol=1e-12)
    assert np.allclose(model.b2, bd, rtol=1e-10, atol=1e-14)


def test_nonlinear_without_backlash_matches_linear_model(linear_nominal):
    model = dynamics.linearize_nominal(linear_nominal, 0.006)
    x_nl = dynamics.rest_state()
    x_lin = dynamics.rest_state()
    ys_nl, ys_lin = [], []
    for k in range(667):
        u = 5.0 * math.sin(0.02 * k) + (1.0 if k > 100 else 0.0)
        x_nl = dynamics.step_plant(x_nl, u, 0.0, linear_nominal, 0.006, substeps=40)
        x_lin = model.step(x_lin, u)
        ys_nl.append(x_nl[X_B])
        ys_lin.append(x_lin[X_B])
    ys_nl, ys_lin = np.array(ys_nl), np.array(ys_lin)
    assert np.max(np.abs(ys_nl - ys_lin)) / np.max(np.abs(ys_lin)) < 1e-6


def test_free_motion_dissipates_energy(nominal):
    s = np.array([0.004, 0.002, -0.003, 0.0, 0.0, 0.05])
    energies = [dynamics.mechanical_energy(s, nominal)]
    for _ in range(6):
        for _ in range(50):
            s = dynamics.step_plant(s, 0.0, 0.0, nominal, 0.006)
        energies.append(dynamics.mechanical_energy(s, nominal))
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_reference_switches_at_switch_time(nominal):
    assert dynamics.reference_signal(nominal, 0.0) == -0.006
    assert dynamics.reference_signal(nominal, 1.999) == -0.006
    assert dynamics.reference_signal(nominal, 2.0) == 0.0227
    assert dynamics.no_disturbance(1.0) == 0.0


def test_active_components_are_nested():
    sets = [set(dynamics.active_components(t)) for t in range(5)]
    assert sets[0] == set()
    assert sets[2] == {"masses", "reference", "dampings"}
    for a, b in zip(sets, sets[1:]):
        assert a < b
    with pytest.raises(ValueError):
        dynamics.active_components(5)


def test_sample_plant_stage_zero_is_linear_nominal(nominal):
    p = dynamics.sample_plant(0, UncertaintyRanges(), rng_stream(0, "plant"))
    assert p == nominal.replace(delta=0.0)


def test_sample_plant_only_touches_active_components(nominal):
    ranges = UncertaintyRanges()
    rng = rng_stream(1, "plant")
    for _ in range(50):
        p1 = dynamics.sample_plant(1, ranges, rng)
        assert (p1.c_g, p1.c_d, p1.c_c, p1.delta) == (nominal.c_g, nominal.c_d, nominal.c_c, 0.0)
        assert ranges.m_b[0] <= p1.m_b <= ranges.m_b[1]
        lo, hi = ranges.stage1_reference("yr_seg1")
        assert lo <= p1.yr_seg1 <= hi

        p3 = dynamics.sample_plant(3, ranges, rng)
        assert p3.delta == nominal.delta
        assert ranges.c_d[0] <= p3.c_d <= ranges.c_d[1]
        assert (p3.k_c, p3.k_g, p3.k_d, p3.m_g, p3.c_cl) == (nominal.k_c, nominal.k_g, nominal.k_d, nominal.m_g, nominal.c_cl)

        p4 = dynamics.sample_plant(4, ranges, rng)
        assert ranges.delta[0] <= p4.delta <= ranges.delta[1]


def test_enlarged_reference_reaches_outside_stage_one_interval():
    ranges = UncertaintyRanges()
    lo, hi = ranges.stage1_reference("yr_seg2")
    rng = rng_stream(2, "plant")
    draws = [dynamics.sample_plant(3, ranges, rng).yr_seg2 for _ in range(200)]
    assert any(d < lo or d > hi for d in draws)
    assert all(ranges.yr_seg2[0] <= d <= ranges.yr_seg2[1] for d in draws)
