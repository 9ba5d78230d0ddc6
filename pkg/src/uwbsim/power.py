"""Inductive power subsystem and the synthesizer-free design calculators.

Covers the resonant two-coil efficiency, the quasi-static dual-halfwave
rectifier, the limiter and the slow detuning regulator, plus the
proportional-Q and two-pulses-per-period rules for driving the TX tank
straight from the power carrier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

LIMIT_RATIO = 1.15


@dataclass(frozen=True)
class PowerLinkParams:
    """Power link description. ``l_rx`` is the receive coil inductance (H).

    The defaults are the preset fitted to the two measured load points
    (28 % at 4 mA, 40 % at 10 mA); see :func:`fit_coupling`.
    """

    f_link: float = 1.5e6
    k: float = 0.02359
    q_tx: float = 100.0
    q_rx: float = 92.0
    l_rx: float = 2e-6
    v_source: float = 15.0
    diode_drop: float = 0.4
    c_filter: float = 10e-6
    v_target: float = 12.0
    detune_gain: float = 1e-8
    c_min_ratio: float = 0.5

    def __post_init__(self):
        for name in ("f_link", "k", "q_tx", "q_rx", "l_rx", "v_source", "diode_drop",
                     "c_filter", "v_target", "detune_gain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"power_link.{name} must be positive")
        if not self.k < 1:
            raise ValueError("power_link.k must be < 1")
        if not 0 < self.c_min_ratio < 1:
            raise ValueError("power_link.c_min_ratio must be in (0, 1)")

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.f_link

    @property
    def c_resonant(self) -> float:
        """Receive tank capacitance that resonates with ``l_rx`` at ``f_link``."""
        return 1.0 / (self.omega**2 * self.l_rx)

    @property
    def c_bounds(self) -> tuple[float, float]:
        return self.c_min_ratio * self.c_resonant, self.c_resonant

    @property
    def limit(self) -> float:
        return LIMIT_RATIO * self.v_target


@dataclass(frozen=True)
class RegulatorState:
    c_tune: float
    v_rect: float
    limiter_active: bool = False

    def __post_init__(self):
        if not self.v_rect >= 0:
            raise ValueError("v_rect must be >= 0")


def load_q(p: PowerLinkParams, i_load: float) -> float:
    """Quality factor of the load ``v_target/i_load`` across the receive tank."""
    if not i_load > 0:
        raise ValueError("i_load must be positive")
    return (p.v_target / i_load) / (p.omega * p.l_rx)


def link_efficiency(p: PowerLinkParams, i_load: float) -> float:
    """Resonant two-coil efficiency in percent.

    The transfer term uses the loaded receive Q (coil and load in parallel);
    the second factor is the share of received power reaching the load.
    """
    q_l = load_q(p, i_load)
    q2 = p.q_rx * q_l / (p.q_rx + q_l)
    x = p.k**2 * p.q_tx * q2
    return 100.0 * x / (1.0 + x) * p.q_rx / (p.q_rx + q_l)


def fit_coupling(p: PowerLinkParams, i_loads, targets) -> PowerLinkParams:
    """Least-squares fit of ``k`` and ``q_rx`` to measured efficiencies (%)."""
    i_loads = np.asarray(i_loads, dtype=float)
    targets = np.asarray(targets, dtype=float)

    def resid(x):
        q = replace(p, k=x[0], q_rx=x[1])
        return [link_efficiency(q, i) - t for i, t in zip(i_loads, targets)]

    r = least_squares(resid, [0.1, 50.0], bounds=([1e-6, 1.0], [0.999, 1e5]))
    return replace(p, k=float(r.x[0]), q_rx=float(r.x[1]))


def rectifier_output(v_peak: float, p: PowerLinkParams, i_load: float) -> tuple[float, float]:
    """DC level and peak-to-peak ripple of the dual-halfwave rectifier."""
    if not v_peak > p.diode_drop:
        raise ValueError(f"v_peak {v_peak} V does not exceed the diode drop {p.diode_drop} V")
    return v_peak - p.diode_drop, i_load / (2 * p.f_link * p.c_filter)


def detune_attenuation(c_tune: float, p: PowerLinkParams) -> float:
    """Universal resonance curve for a tank retuned to ``c_tune``."""
    delta = math.sqrt(p.c_resonant / c_tune) - 1.0
    return 1.0 / math.sqrt(1.0 + (2.0 * p.q_rx * delta) ** 2)


def rectified_voltage(c_tune: float, p: PowerLinkParams,
                      v_source: float | None = None) -> tuple[float, bool]:
    """Limited rectifier voltage and whether the limiter is clamping."""
    raw = _unlimited_voltage(c_tune, p, v_source)
    return min(raw, p.limit), raw > p.limit


def _unlimited_voltage(c_tune: float, p: PowerLinkParams, v_source: float | None = None) -> float:
    vs = p.v_source if v_source is None else v_source
    return max(0.0, vs * detune_attenuation(c_tune, p) - p.diode_drop)


def regulator_at(c_tune: float, p: PowerLinkParams) -> RegulatorState:
    v, lim = rectified_voltage(c_tune, p)
    return RegulatorState(c_tune, v, lim)


def detune_step(s: RegulatorState, p: PowerLinkParams, dt: float) -> RegulatorState:
    """One step of the slow detuning loop."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    lo, hi = p.c_bounds
    c = s.c_tune - p.detune_gain * (s.v_rect - p.v_target) * dt
    c = min(max(c, lo), hi)
    v, lim = rectified_voltage(c, p)
    return RegulatorState(c, v, lim)


def equilibrium_c(p: PowerLinkParams) -> float:
    """Tuning that puts the unlimited rectifier output at ``v_target``.

    Returns the resonant value when the source cannot reach the target.
    """
    need = (p.v_target + p.diode_drop) / p.v_source
    if need >= 1.0:
        return p.c_resonant
    delta = math.sqrt(1.0 / need**2 - 1.0) / (2.0 * p.q_rx)
    return max(p.c_resonant / (1.0 + delta) ** 2, p.c_bounds[0])


def regulation_time_constant(p: PowerLinkParams, c_tune: float | None = None) -> float:
    """Small-signal time constant ``1/(gain*|dV/dC|)`` around ``c_tune``."""
    c = equilibrium_c(p) if c_tune is None else c_tune
    h = c * 1e-7
    slope = (_unlimited_voltage(c + h, p) - _unlimited_voltage(c - h, p)) / (2 * h)
    if slope == 0:
        raise ValueError("regulator has no control authority at this tuning")
    return 1.0 / (p.detune_gain * abs(slope))


def simulate_regulation(p: PowerLinkParams, t_end: float, dt: float,
                        step_time: float | None = None, step_factor: float = 1.0,
                        s0: RegulatorState | None = None):
    """Closed-loop trace ``(t, v_rect, c_tune, limiter_active)``.

    At ``step_time`` the source amplitude is multiplied by ``step_factor``.
    """
    if s0 is None:
        s0 = regulator_at(equilibrium_c(p), p)
    n = int(round(t_end / dt))
    t = np.arange(1, n + 1) * dt
    v = np.empty(n)
    c = np.empty(n)
    lim = np.empty(n, dtype=bool)
    s, q = s0, p
    for i in range(n):
        if step_time is not None and q is p and t[i] >= step_time:
            q = replace(p, v_source=p.v_source * step_factor)
            vr, la = rectified_voltage(s.c_tune, q)
            s = RegulatorState(s.c_tune, vr, la)
        s = detune_step(s, q, dt)
        v[i], c[i], lim[i] = s.v_rect, s.c_tune, s.limiter_active
    return t, v, c, lim


def vco_free_required_q(f_target: float, f_ref: float, q_ref: float) -> float:
    """Tank Q needed to keep the same clip-edge sharpness at a lower carrier."""
    if not (f_target > 0 and f_ref > 0 and q_ref > 0):
        raise ValueError("frequencies and q_ref must be positive")
    return q_ref * f_ref / f_target


def vco_free_max_rate(f_power: float) -> float:
    """One OOK bit per clip event, two clip events per carrier period."""
    if not f_power > 0:
        raise ValueError("f_power must be positive")
    return 2.0 * f_power
