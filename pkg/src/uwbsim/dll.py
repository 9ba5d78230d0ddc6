"""Behavioral delay-locked loop aligning OOK edges a quarter period ahead of V1.

Loop structure
--------------
* ``filt_a`` averages the delayed data with DC gain 1/2.
* ``filt_b`` averages ``pa_square AND delayed_data`` (NOR of the inverted
  inputs) with unity gain.
* Their difference drives an integrator; the integrator output maps affinely
  to a clamped delay which follows through a single-pole lag (``loop_tau``).

Every run of "1"s in the aux-bit schedule is a whole number of tank periods
plus one quarter period, so only that extra quarter period reaches the error.
The error vanishes when it straddles a ``pa_square`` edge; one of the two
balance points is the quarter-period lead, the other the quarter-period lag.
The aux bit makes the lead point the attracting one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .waveform import BitStream, Waveform

LOCK_TOLERANCE = 0.02  # fraction of T
LOCK_WINDOW = 0.10  # trailing fraction of the run
# Irrational so data edges dither across the step grid instead of parking
# on one side of a quantization dead zone.
STEPS_PER_PERIOD = 10 * math.pi


@dataclass(frozen=True)
class DllConfig:
    """Loop constants. Times in s, ``loop_gain`` in 1/(V*s).

    ``data_phase`` is the offset of the undelayed symbol clock from the
    tank's zero phase; ``buffer_delay`` is the latency of the digital buffer
    that squares up V1; ``delay_per_volt`` is the delay-line gain.
    """

    T: float = 1.0 / 915e6
    delay_min: float = 0.05 / 915e6
    delay_max: float = 0.95 / 915e6
    loop_gain: float = 1e8
    loop_tau: float = 10e-9
    rc_tau: float = 20e-9
    step_dt: float = 1.0 / 915e6 / STEPS_PER_PERIOD
    delay_per_volt: float = 1.0 / 915e6
    data_phase: float = 0.25 / 915e6
    buffer_delay: float = 0.125 / 915e6
    pd_offset: float = 1e-4

    def __post_init__(self):
        if not 0 < self.delay_min < self.delay_max < self.T:
            raise ValueError("DllConfig needs 0 < delay_min < delay_max < T")
        for name in ("loop_tau", "rc_tau", "step_dt", "delay_per_volt", "loop_gain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"DllConfig.{name} must be positive")
        if self.buffer_delay < 0:
            raise ValueError("buffer_delay must be >= 0")

    @classmethod
    def for_period(cls, T: float, **kw) -> "DllConfig":
        """Defaults rescaled to tank period ``T``."""
        base = dict(delay_min=0.05 * T, delay_max=0.95 * T, step_dt=T / STEPS_PER_PERIOD,
                    delay_per_volt=T, data_phase=0.25 * T, buffer_delay=0.125 * T)
        base.update(kw)
        return cls(T=T, **base)

    @property
    def delay_mid(self) -> float:
        return 0.5 * (self.delay_min + self.delay_max)

    def delay_of(self, v_ctrl: float) -> float:
        """Affine control map, clamped to the delay-line range."""
        d = self.delay_mid + self.delay_per_volt * v_ctrl
        return min(max(d, self.delay_min), self.delay_max)

    def v_ctrl_of(self, delay: float) -> float:
        return (delay - self.delay_mid) / self.delay_per_volt

    @property
    def v_ctrl_bounds(self) -> tuple[float, float]:
        return self.v_ctrl_of(self.delay_min), self.v_ctrl_of(self.delay_max)


@dataclass(frozen=True)
class DllState:
    delay: float
    v_ctrl: float = 0.0
    filt_a: float = 0.0
    filt_b: float = 0.0
    locked: bool = False

    def __post_init__(self):
        vals = (self.delay, self.v_ctrl, self.filt_a, self.filt_b)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("DllState values must be finite")

    @classmethod
    def at_delay(cls, delay: float, cfg: DllConfig) -> "DllState":
        if not cfg.delay_min <= delay <= cfg.delay_max:
            raise ValueError(f"initial delay {delay:g} s outside [{cfg.delay_min:g}, {cfg.delay_max:g}]")
        return cls(delay=delay, v_ctrl=cfg.v_ctrl_of(delay))


@dataclass(frozen=True, eq=False)
class SymbolSchedule:
    """Data bits each followed by a quarter-period slot.

    ``levels`` and ``durations`` interleave data and aux symbols. With the
    aux bit disabled the extra slot carries "0".
    """

    levels: np.ndarray
    durations: np.ndarray
    data_bits: np.ndarray
    t_bit: float
    t_aux: float

    def __len__(self):
        return self.levels.size

    @property
    def symbol_period(self) -> float:
        return self.t_bit + self.t_aux

    @property
    def total_duration(self) -> float:
        return self.data_bits.size * self.symbol_period

    @property
    def aux_enabled(self) -> bool:
        return bool(self.levels.size == 0 or self.levels[1] == 1)


def symbol_timing(f0: float, bit_rate: float) -> tuple[int, float, float]:
    """Tank periods per symbol, symbol period and data-bit duration.

    The symbol holds a whole number of tank periods so every gate edge lands
    on the same carrier phase; the data bit is that minus the aux slot.
    """
    if not (f0 > 0 and bit_rate > 0):
        raise ValueError("f0 and bit_rate must be positive")
    n = max(1, int(round(f0 / bit_rate)))
    T = 1.0 / f0
    return n, n * T, n * T - T / 4


def insert_aux_bits(data: BitStream, T: float, aux_enabled: bool = True) -> SymbolSchedule:
    """Append a T/4 slot after every data bit of duration ``data.bit_period``."""
    if not T > 0:
        raise ValueError("T must be positive")
    n = len(data)
    levels = np.empty(2 * n, dtype=np.uint8)
    levels[0::2] = data.bits
    levels[1::2] = 1 if aux_enabled else 0
    durations = np.empty(2 * n)
    durations[0::2] = data.bit_period
    durations[1::2] = T / 4
    return SymbolSchedule(levels, durations, data.bits.copy(), data.bit_period, T / 4)


def _rc_coeff(dt: float, tau: float) -> float:
    return -math.expm1(-dt / tau)


def dll_step(s: DllState, cfg: DllConfig, pa_square: int, delayed_data: int) -> DllState:
    """Advance the loop by one ``step_dt``."""
    if pa_square not in (0, 1) or delayed_data not in (0, 1):
        raise ValueError("dll_step inputs must be binary samples")
    g_rc = _rc_coeff(cfg.step_dt, cfg.rc_tau)
    g_loop = _rc_coeff(cfg.step_dt, cfg.loop_tau)
    both = 1 if (pa_square and delayed_data) else 0  # NOR of the inverted inputs
    fa = s.filt_a + (0.5 * delayed_data - s.filt_a) * g_rc
    fb = s.filt_b + (both - s.filt_b) * g_rc
    lo, hi = cfg.v_ctrl_bounds
    v = s.v_ctrl + cfg.loop_gain * (fa - fb + cfg.pd_offset) * cfg.step_dt
    v = min(max(v, lo), hi)
    delay = s.delay + (cfg.delay_of(v) - s.delay) * g_loop
    return DllState(delay=delay, v_ctrl=v, filt_a=fa, filt_b=fb, locked=s.locked)


def lock_error(s: DllState | None, cfg: DllConfig, measured_lead: float) -> float:
    """``measured_lead - T/4`` wrapped into (-T/2, T/2]."""
    T = cfg.T
    e = math.fmod(measured_lead - T / 4, T)
    if e > T / 2:
        e -= T
    elif e <= -T / 2:
        e += T
    return e


def _rising_crossings(w: Waveform) -> np.ndarray:
    x = w.samples
    k = np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0))
    frac = -x[k] / (x[k + 1] - x[k])
    return w.t0 + (k + frac) / w.sample_rate


@dataclass(frozen=True, eq=False)
class DllTrajectory:
    t: np.ndarray
    delay: np.ndarray
    v_ctrl: np.ndarray
    filt_a: np.ndarray
    filt_b: np.ndarray
    lock_error: np.ndarray

    COLUMNS = ("t_s", "delay_s", "v_ctrl", "filt_a", "filt_b", "lock_error_s")

    def rows(self):
        return zip(self.t, self.delay, self.v_ctrl, self.filt_a, self.filt_b, self.lock_error)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows():
                fh.write(",".join(format(float(v), ".17g") for v in r) + "\n")


def dll_run(schedule: SymbolSchedule, pa: Waveform, cfg: DllConfig, duration: float,
            initial_delay: float | None = None) -> tuple[DllState, DllTrajectory]:
    """Closed-loop simulation on the ``step_dt`` grid.

    ``pa`` is the PA output V1; it is squared by its sign, delayed by
    ``buffer_delay`` and inverted to form ``pa_square``. The data schedule
    repeats if the run outlasts it. The lead is measured from each step's
    current data edge to the next rising zero crossing of V1.
    """
    if duration > pa.duration + pa.dt or pa.t0 > 0:
        raise ValueError(f"pa waveform covers {pa.duration:g} s, run needs {duration:g} s")
    if len(schedule) == 0:
        raise ValueError("empty data schedule")
    if initial_delay is None:
        initial_delay = cfg.delay_mid
    s = DllState.at_delay(initial_delay, cfg)

    n_steps = int(duration / cfg.step_dt)
    dt = cfg.step_dt
    g_rc = _rc_coeff(dt, cfg.rc_tau)
    g_loop = _rc_coeff(dt, cfg.loop_tau)
    lo, hi = cfg.v_ctrl_bounds
    gain_dt = cfg.loop_gain * dt

    # inputs are sampled mid-step so no step lands exactly on a zero crossing
    t_grid = np.arange(n_steps) * dt
    t_mid = t_grid + dt / 2
    v1 = np.interp(t_mid - cfg.buffer_delay, pa.t, pa.samples)
    pa_sq = (v1 < 0).tolist()

    bits = schedule.data_bits.tolist()
    nb = len(bits)
    aux = 1 if schedule.aux_enabled else 0
    t_sym, t_bit = schedule.symbol_period, schedule.t_bit
    phase0 = cfg.data_phase

    delay, v, fa, fb = s.delay, s.v_ctrl, s.filt_a, s.filt_b
    out = np.empty((n_steps, 4))
    for i in range(n_steps):
        u = t_mid[i] - phase0 - delay
        k = math.floor(u / t_sym)
        d = bits[k % nb] if (u - k * t_sym) < t_bit else aux
        both = 1 if (d and pa_sq[i]) else 0
        fa += (0.5 * d - fa) * g_rc
        fb += (both - fb) * g_rc
        v += gain_dt * (fa - fb + cfg.pd_offset)
        v = lo if v < lo else (hi if v > hi else v)
        target = cfg.delay_mid + cfg.delay_per_volt * v
        delay += (target - delay) * g_loop
        out[i] = (delay, v, fa, fb)

    t_out = t_grid + dt
    err = _lead_errors(t_out, out[:, 0], pa, cfg, t_sym)
    tail = err[int(n_steps * (1 - LOCK_WINDOW)):]
    locked = bool(tail.size and np.all(np.abs(tail) < LOCK_TOLERANCE * cfg.T))
    final = DllState(delay=float(out[-1, 0]), v_ctrl=float(out[-1, 1]),
                     filt_a=float(out[-1, 2]), filt_b=float(out[-1, 3]), locked=locked)
    traj = DllTrajectory(t_out, out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(),
                         out[:, 3].copy(), err)
    return final, traj


def _lead_errors(t, delay, pa: Waveform, cfg: DllConfig, t_sym: float) -> np.ndarray:
    zc = _rising_crossings(pa)
    if zc.size < 2:
        raise ValueError("pa waveform has too few zero crossings to measure the lead")
    # most recent data edge at or before each step
    edge = cfg.data_phase + delay + np.floor((t - cfg.data_phase - delay) / t_sym) * t_sym
    j = np.clip(np.searchsorted(zc, edge), 0, zc.size - 1)
    lead = zc[j] - edge
    T = cfg.T
    e = np.mod(lead - T / 4 + T / 2, T) - T / 2
    e[e == -T / 2] = T / 2
    return e


def lead_of_delay(delay: float, cfg: DllConfig) -> float:
    """Analytic lead for a V1 = cos(w0 t) carrier with zero crossings at 3T/4 + kT."""
    return (0.75 * cfg.T - cfg.data_phase - delay) % cfg.T


def delay_for_lead(lead: float, cfg: DllConfig) -> float:
    """Delay, within one period of ``delay_min``, that produces ``lead``."""
    d = (0.75 * cfg.T - cfg.data_phase - lead - cfg.delay_min) % cfg.T
    return cfg.delay_min + d



def settled_at_lag(traj: DllTrajectory, cfg: DllConfig) -> bool:
    """True when the trailing window sits at the quarter-period lag (false lock)."""
    n = traj.lock_error.size
    tail = traj.lock_error[int(n * (1 - LOCK_WINDOW)):]
    off = np.abs(np.abs(tail) - cfg.T / 2)
    return bool(tail.size and np.all(off < LOCK_TOLERANCE * cfg.T))


def gate_edges(delay: float, cfg: DllConfig, n_bits: int, symbol_period: float) -> np.ndarray:
    """OOK switch instants for ``n_bits`` symbols, one per boundary."""
    return cfg.data_phase + delay + np.arange(n_bits + 1) * symbol_period
