"""Transmitter physics: LC tank, DAC-set clipper, OOK switch, antenna coupling.

The tank node is modeled as the capacitor voltage of a series-resonant LC
tank driven by the PA. Pulses come from clipping that node between two DAC
thresholds and high-passing the result at the antenna; OOK gating shorts the
clipped node to ``v_mid`` for "0" bits.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal
from scipy.integrate import solve_ivp

from .waveform import BitStream, Waveform, dbm_to_power, filter_first_order

DEFAULT_HP_CORNER = 1e9


@dataclass(frozen=True)
class TankParams:
    """Series RLC tank. ``r_loss`` and ``r_antenna`` are R_S and R_A."""

    L: float = 10e-9
    C: float = 3.026e-12
    r_loss: float = 2.2
    r_antenna: float = 0.6
    drive_amp: float = 0.0246
    drive_freq: float | None = None

    def __post_init__(self):
        for name in ("L", "C", "r_loss", "r_antenna"):
            if not getattr(self, name) > 0:
                raise ValueError(f"TankParams.{name} must be positive")
        if self.drive_amp < 0:
            raise ValueError("TankParams.drive_amp must be >= 0")
        if self.drive_freq is not None and not self.drive_freq > 0:
            raise ValueError("TankParams.drive_freq must be positive")

    @property
    def omega0(self) -> float:
        return 1.0 / np.sqrt(self.L * self.C)

    @property
    def f0(self) -> float:
        return self.omega0 / (2 * np.pi)

    @property
    def period(self) -> float:
        return 1.0 / self.f0

    @property
    def r_total(self) -> float:
        return self.r_loss + self.r_antenna

    @property
    def q(self) -> float:
        return self.omega0 * self.L / self.r_total

    @property
    def alpha(self) -> float:
        """Neper frequency (R_S + R_A) / 2L in 1/s."""
        return self.r_total / (2 * self.L)

    @property
    def f_drive(self) -> float:
        return self.f0 if self.drive_freq is None else self.drive_freq

    def node_amplitude(self) -> float:
        """Steady-state capacitor-voltage amplitude at the drive frequency."""
        w = 2 * np.pi * self.f_drive
        z = complex(self.r_total, w * self.L - 1.0 / (w * self.C))
        return self.drive_amp / (w * self.C * abs(z))


@dataclass(frozen=True)
class ClipperConfig:
    v_max: float = 0.805
    v_mid: float = 0.6
    dac_bits: int = 8
    dac_fullscale: float = 1.2
    knee_width: float = 0.0

    def __post_init__(self):
        if not self.v_mid < self.v_max:
            raise ValueError("ClipperConfig requires v_mid < v_max")
        if self.dac_bits < 1 or not self.dac_fullscale > 0:
            raise ValueError("ClipperConfig needs dac_bits >= 1 and dac_fullscale > 0")
        if self.knee_width < 0:
            raise ValueError("knee_width must be >= 0")

    @property
    def v_min(self) -> float:
        """Lower clip level, mirrored about the AC ground."""
        return 2 * self.v_mid - self.v_max

    @property
    def lsb(self) -> float:
        return self.dac_fullscale / (2**self.dac_bits - 1)

    def quantized(self) -> "ClipperConfig":
        """Thresholds snapped to the DAC grid."""
        return replace(self, v_max=dac_quantize(self.v_max, self),
                       v_mid=dac_quantize(self.v_mid, self))


@dataclass(frozen=True)
class PulseBurstSpec:
    t_p: float

    def __post_init__(self):
        if not self.t_p > 0:
            raise ValueError("t_p must be positive")


def tank_steady_state_wave(p: TankParams, duration: float, sample_rate: float,
                           t0: float = 0.0) -> Waveform:
    """AC part of the tank node in steady state, ``A*sin(w*t)``."""
    if not sample_rate > 10 * p.f_drive:
        raise ValueError(
            f"sample_rate {sample_rate:g} Hz must exceed 10x the tank frequency {p.f_drive:g} Hz")
    n = max(1, int(round(duration * sample_rate)))
    t = t0 + np.arange(n) / sample_rate
    return Waveform(p.node_amplitude() * np.sin(2 * np.pi * p.f_drive * t), sample_rate, t0)


def pa_output_wave(p: TankParams, duration: float, sample_rate: float,
                   amplitude: float = 1.0) -> Waveform:
    """PA output V1, a quarter period ahead of the tank node: ``a*cos(w*t)``."""
    n = max(1, int(round(duration * sample_rate)))
    t = np.arange(n) / sample_rate
    return Waveform(amplitude * np.cos(2 * np.pi * p.f_drive * t), sample_rate)


def add_spur(w: Waveform, freq: float, power_dbm: float, r_ref: float = 50.0) -> Waveform:
    """Additive tone of the given power, e.g. synthesizer leakage at 915 MHz."""
    amp = np.sqrt(2 * dbm_to_power(power_dbm) * r_ref)
    return w.with_samples(w.samples + amp * np.sin(2 * np.pi * freq * w.t))


def tank_onoff_envelope(p: TankParams, spec: PulseBurstSpec, t):
    """Normalized envelope of a tank switched on for ``t_p`` then released."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("envelope time must be >= 0")
    a = p.alpha
    on = 1.0 - np.exp(-a * np.minimum(t, spec.t_p))
    env = np.where(t <= spec.t_p, on, on * np.exp(-a * np.maximum(t - spec.t_p, 0.0)))
    return env if env.ndim else float(env)


def steady_state_efficiency(r_loss: float, r_antenna: float) -> float:
    if r_loss < 0 or r_antenna < 0:
        raise ValueError("resistances must be >= 0")
    if r_loss + r_antenna <= 0:
        raise ValueError("r_loss + r_antenna must be positive")
    return 100.0 * r_antenna / (r_antenna + r_loss)


def transient_pulse_efficiency(p: TankParams, spec: PulseBurstSpec) -> float:
    """Efficiency of the conventional on/off scheme averaged over the on-window.

    The supply is charged the steady-state power for the whole window while
    the power reaching the tank follows the start-up envelope, so the result
    is the steady-state split scaled by the window mean of ``1 - exp(-a*t)``.
    """
    x = p.alpha * spec.t_p
    if x < 1e-6:
        mean_env = x / 2 - x * x / 6
    else:
        mean_env = 1.0 - (1.0 - np.exp(-x)) / x
    return steady_state_efficiency(p.r_loss, p.r_antenna) * mean_env


def simulate_transient_efficiency(p: TankParams, spec: PulseBurstSpec,
                                  sample_rate: float = 80e9) -> float:
    """Waveform-level check of :func:`transient_pulse_efficiency`.

    Integrates the series RLC from rest under a resonant sine drive, samples
    the source power ``v*i`` at ``sample_rate`` and compares the delivered
    energy with the steady-state draw ``V^2/(2R)`` over the window.
    """
    v, w = p.drive_amp, p.omega0
    if v <= 0:
        raise ValueError("drive_amp must be positive for the energy simulation")

    def rhs(t, x):
        i, vc = x
        return [(v * np.sin(w * t) - p.r_total * i - vc) / p.L, i / p.C]

    n = int(np.ceil(spec.t_p * sample_rate))
    t = np.linspace(0.0, spec.t_p, n + 1)
    sol = solve_ivp(rhs, (0.0, spec.t_p), [0.0, 0.0], t_eval=t, method="DOP853",
                    rtol=1e-10, atol=1e-14 * max(v, 1.0))
    i = sol.y[0]
    delivered = np.trapezoid(v * np.sin(w * t) * i, t)
    drawn = v * v / (2 * p.r_total) * spec.t_p
    return steady_state_efficiency(p.r_loss, p.r_antenna) * delivered / drawn


def dac_quantize(v: float, cfg: ClipperConfig) -> float:
    """Nearest DAC level; halfway values round up."""
    if not 0 <= v <= cfg.dac_fullscale:
        raise ValueError(f"{v} V outside DAC range [0, {cfg.dac_fullscale}] V")
    code = np.floor(v / cfg.lsb + 0.5)
    code = min(code, 2**cfg.dac_bits - 1)
    return float(code * cfg.lsb)


def _soft_limit_upper(x, hi, k):
    y = np.minimum(x, hi)
    if k > 0:
        u = x - (hi - k / 2)
        band = (u > 0) & (u < k)
        y = np.where(band, hi - k / 2 + u - u * u / (2 * k), y)
    return y


def clip_waveform(w: Waveform, cfg: ClipperConfig) -> Waveform:
    """Limit between ``v_min`` and ``v_max`` with an optional smooth knee."""
    x = w.samples
    if cfg.knee_width == 0:
        return w.with_samples(np.clip(x, cfg.v_min, cfg.v_max))
    k = cfg.knee_width
    y = _soft_limit_upper(x, cfg.v_max, k)
    y = -_soft_limit_upper(-y, -cfg.v_min, k)
    return w.with_samples(y)


def ook_gate(w_clipped: Waveform, bits: BitStream, cfg: ClipperConfig,
             edge_times) -> Waveform:
    """Pass the clipped node for "1" bits, hold ``v_mid`` otherwise.

    ``edge_times`` holds every bit boundary, so ``len(bits) + 1`` values.
    Each switch happens at the sample nearest its edge time.
    """
    edges = np.asarray(edge_times, dtype=float)
    if edges.size != len(bits) + 1:
        raise ValueError(
            f"need {len(bits) + 1} edge times for {len(bits)} bits, got {edges.size}")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("edge_times must be strictly increasing")
    n = len(w_clipped)
    idx = np.clip(np.round((edges - w_clipped.t0) * w_clipped.sample_rate), 0, n).astype(np.int64)
    gate = np.zeros(n + 1, dtype=np.int64)
    on = bits.bits.astype(bool)
    np.add.at(gate, idx[:-1][on], 1)
    np.add.at(gate, idx[1:][on], -1)
    mask = np.cumsum(gate[:-1]) > 0
    return w_clipped.with_samples(np.where(mask, w_clipped.samples, cfg.v_mid))


def antenna_couple(w: Waveform, hp_corner: float = DEFAULT_HP_CORNER) -> Waveform:
    """Radiated pulse train: the clipped node high-passed at the antenna."""
    return filter_first_order(w, "highpass", hp_corner)


def detect_pulses(w: Waveform, threshold: float, min_spacing: float) -> np.ndarray:
    """Times of |v| peaks above ``threshold`` at least ``min_spacing`` apart."""
    distance = max(1, int(round(min_spacing * w.sample_rate)))
    peaks, _ = signal.find_peaks(np.abs(w.samples), height=threshold, distance=distance)
    return w.t0 + peaks / w.sample_rate


def chip_efficiency(p_out: float, p_dc: float) -> float:
    """TX efficiency in percent from output power (dBm) and DC power (mW)."""
    if not p_dc > 0:
        raise ValueError("p_dc must be positive")
    return float(100.0 * dbm_to_power(p_out) / (p_dc * 1e-3))


def energy_per_bit(p_dc: float, rate: float) -> float:
    """DC power (mW) over bit rate, in pJ/bit."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    return p_dc * 1e-3 / rate * 1e12
