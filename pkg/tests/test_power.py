import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwbsim.power import (PowerLinkParams, RegulatorState, detune_step, equilibrium_c,
                          fit_coupling, link_efficiency, load_q, rectifier_output,
                          regulation_time_constant, regulator_at, simulate_regulation,
                          vco_free_max_rate, vco_free_required_q)

P = PowerLinkParams()


def efficiency_oracle(k, q_tx, q_rx, r_load, w, L):
    """Two-coil link written out from reflected impedances (series-equivalent)."""
    # parallel load -> series equivalent on the receive coil
    x = w * L
    r_coil = x / q_rx
    r_ser = x**2 / r_load  # high-Q approximation of the parallel load
    r2 = r_coil + r_ser
    # reflected into the primary, with r1 from q_tx on an equal-reactance primary
    r1 = x / q_tx
    r_refl = (k * x) ** 2 / r2
    eta_transfer = r_refl / (r1 + r_refl)
    return 100 * eta_transfer * r_ser / r2


@pytest.mark.parametrize("i_load", [1e-3, 4e-3, 10e-3, 30e-3])
def test_efficiency_matches_circuit_oracle(i_load):
    r_load = P.v_target / i_load
    oracle = efficiency_oracle(P.k, P.q_tx, P.q_rx, r_load, P.omega, P.l_rx)
    assert link_efficiency(P, i_load) == pytest.approx(oracle, rel=1e-9)


def test_fitted_preset_points():
    assert link_efficiency(P, 4e-3) == pytest.approx(28, abs=2)
    assert link_efficiency(P, 10e-3) == pytest.approx(40, abs=2)


def test_fit_recovers_preset():
    fit = fit_coupling(replace(P, k=0.1, q_rx=10), [4e-3, 10e-3], [28.0, 40.0])
    assert link_efficiency(fit, 4e-3) == pytest.approx(28, abs=0.01)
    assert link_efficiency(fit, 10e-3) == pytest.approx(40, abs=0.01)


def test_uncoupled_and_errors():
    assert link_efficiency(replace(P, k=1e-12), 4e-3) == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        link_efficiency(P, 0)
    with pytest.raises(ValueError):
        PowerLinkParams(k=1.0)
    assert load_q(P, 4e-3) == pytest.approx(3000 / (2 * math.pi * 1.5e6 * 2e-6))


@given(k=st.floats(1e-3, 0.9), q_tx=st.floats(1, 1000), q_rx=st.floats(1, 1000),
       i=st.floats(1e-4, 0.1), f=st.floats(1.001, 2))
@settings(max_examples=200)
def test_efficiency_monotone_and_bounded(k, q_tx, q_rx, i, f):
    p = replace(P, k=k, q_tx=q_tx, q_rx=q_rx)
    e = link_efficiency(p, i)
    assert 0 < e < 100
    if k * f < 1:
        assert link_efficiency(replace(p, k=k * f), i) > e
    assert link_efficiency(replace(p, q_tx=q_tx * f), i) > e
    assert link_efficiency(replace(p, q_rx=q_rx * f), i) > e


def test_rectifier():
    v, r = rectifier_output(10, P, 4e-3)
    assert v == pytest.approx(9.6)
    assert r == pytest.approx(133e-6, rel=0.01)
    _, r2 = rectifier_output(10, replace(P, c_filter=2 * P.c_filter), 4e-3)
    assert r2 == r / 2
    with pytest.raises(ValueError):
        rectifier_output(0.3, P, 4e-3)


@given(st.floats(1e-4, 0.1), st.floats(1e-7, 1e-3), st.floats(1e5, 1e7))
def test_ripple_scaling(i, c, f):
    p = replace(P, c_filter=c, f_link=f)
    assert rectifier_output(20, p, i)[1] == pytest.approx(i / (2 * f * c), rel=1e-12)


def test_detune_equilibrium_and_sign():
    s = regulator_at(equilibrium_c(P), P)
    assert s.v_rect == pytest.approx(P.v_target, rel=1e-9)
    nxt = detune_step(s, P, 1e-6)
    assert nxt.c_tune == pytest.approx(s.c_tune, rel=1e-9)
    hot = RegulatorState(P.c_resonant, 2 * P.v_target)
    cs = []
    for _ in range(5):
        hot = detune_step(RegulatorState(hot.c_tune, 2 * P.v_target), P, 1e-5)
        cs.append(hot.c_tune)
    assert np.all(np.diff(cs) < 0)


def test_source_step_recovery():
    tau = regulation_time_constant(P)
    t, v, c, lim = simulate_regulation(P, 12 * tau, tau / 200, step_time=tau, step_factor=1.5)
    assert v.max() <= P.limit + 1e-12
    after = t >= 11 * tau
    assert np.all(np.abs(v[after] - P.v_target) <= 0.02 * P.v_target)
    lo, hi = P.c_bounds
    assert np.all((c >= lo) & (c <= hi))


def test_lyapunov_surrogate():
    tau = regulation_time_constant(P)
    s0 = regulator_at(P.c_resonant, P)  # starts with the limiter clamping
    _, v, _, lim = simulate_regulation(P, 8 * tau, tau / 200, s0=s0)
    free = np.flatnonzero(~lim)
    assert free.size
    e = np.abs(v[free[0]:] - P.v_target)
    assert np.all(np.diff(e) <= 1e-12)


def test_vco_free_calculators():
    f0 = 915e6
    assert vco_free_required_q(f0 / 5, f0, 20) == pytest.approx(100)
    assert vco_free_required_q(f0, f0, 20) == 20
    assert vco_free_required_q(13.67e6, f0, 20) == pytest.approx(1339, abs=1)
    assert vco_free_max_rate(13.67e6) == pytest.approx(27.34e6)
    assert 20e6 <= vco_free_max_rate(13.67e6) <= 30e6
    assert vco_free_max_rate(10e6) == 20e6
    assert vco_free_max_rate(1.5e6) == 3e6
    with pytest.raises(ValueError):
        vco_free_max_rate(0)
