"""Over-the-air path: antenna band edges, calibrated free-space loss, receiver noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal

from .waveform import R_REF, Waveform, dbm_to_power

SPEED_OF_LIGHT = 299_792_458.0
_WARMUP = 4096


@dataclass(frozen=True)
class ChannelConfig:
    """Link geometry, antenna bands and noise.

    ``gain_cal`` lumps both antenna gains and any mismatch into one fitted
    constant. ``noise_density`` of ``-inf`` disables the noise source.
    ``noise_bw`` is the analysis bandwidth the noise floor is quoted over.
    """

    distance: float = 1.0
    center_freq: float = 4e9
    tx_band: tuple[float, float] = (3.3e9, 8e9)
    rx_band: tuple[float, float] = (2.4e9, 8e9)
    gain_cal: float = -13.5
    noise_density: float = -161.8
    rng_seed: int = 0
    noise_bw: float = 1.5e9
    band_order: int = 2

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("channel.distance must be positive")
        if not self.center_freq > 0:
            raise ValueError("channel.center_freq must be positive")
        for name in ("tx_band", "rx_band"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ValueError(f"channel.{name} must satisfy 0 < lo < hi")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if math.isnan(self.noise_density) or self.noise_density == math.inf:
            raise ValueError("channel.noise_density must be finite or -inf")
        if not math.isfinite(self.gain_cal):
            raise ValueError("channel.gain_cal must be finite")
        if not self.noise_bw > 0:
            raise ValueError("channel.noise_bw must be positive")
        if self.band_order < 1:
            raise ValueError("channel.band_order must be >= 1")

    @property
    def attenuation_db(self) -> float:
        return free_space_path_loss(self.distance, self.center_freq) - self.gain_cal

    @property
    def budget_bw(self) -> float:
        return min(self.rx_band[1] - self.rx_band[0], self.noise_bw)


class LinkBudget(NamedTuple):
    rx_power: float
    noise_floor: float
    snr: float


def free_space_path_loss(d: float, f: float) -> float:
    """Friis loss in dB."""
    if not (d > 0 and f > 0):
        raise ValueError("distance and frequency must be positive")
    return 20.0 * math.log10(4 * math.pi * d * f / SPEED_OF_LIGHT)


def rx_power_budget(p_out: float, cfg: ChannelConfig) -> LinkBudget:
    """Received power, integrated noise floor and SNR, all in dBm/dB."""
    rx = p_out - cfg.attenuation_db
    floor = cfg.noise_density + 10.0 * math.log10(cfg.budget_bw)
    return LinkBudget(rx, floor, rx - floor)


def band_sos(band, sample_rate: float, order: int = 2) -> np.ndarray:
    lo, hi = band
    if not 0 < lo < hi < sample_rate / 2:
        raise ValueError(
            f"band [{lo:g}, {hi:g}] Hz must lie below Nyquist {sample_rate / 2:g} Hz")
    return signal.butter(order, [lo, hi], btype="bandpass", fs=sample_rate, output="sos")


def band_limit(w: Waveform, band, order: int = 2) -> Waveform:
    """Butterworth band-pass with ``order``-th order edges, from rest."""
    return w.with_samples(signal.sosfilt(band_sos(band, w.sample_rate, order), w.samples))


def noise_sigma(cfg: ChannelConfig, r_ref: float = R_REF) -> float:
    """RMS noise voltage for ``noise_density`` integrated over ``noise_bw``."""
    if cfg.noise_density == -math.inf:
        return 0.0
    return math.sqrt(dbm_to_power(cfg.noise_density) * cfg.noise_bw * r_ref)


def _noise_gain(sos: np.ndarray, n: int = 1 << 14) -> float:
    imp = np.zeros(n)
    imp[0] = 1.0
    return float(np.sum(signal.sosfilt(sos, imp) ** 2))


class ChannelStream:
    """Stateful channel for processing a long record chunk by chunk.

    Filter states carry across chunks, so concatenated outputs equal a single
    whole-record pass for the same noise draws. ``insertion_loss_db`` is the
    band-filter loss on the signal of interest; the flat gain is raised by it
    so in-band received power matches the link budget.
    """

    def __init__(self, cfg: ChannelConfig, sample_rate: float,
                 rng: np.random.Generator | None = None, r_ref: float = R_REF,
                 insertion_loss_db: float = 0.0):
        if sample_rate < 2 * cfg.rx_band[1]:
            raise ValueError(
                f"sample_rate {sample_rate:g} Hz below twice the RX band edge {cfg.rx_band[1]:g} Hz")
        self.cfg = cfg
        self.sample_rate = sample_rate
        self.rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        self._tx = band_sos(cfg.tx_band, sample_rate, cfg.band_order)
        self._rx = band_sos(cfg.rx_band, sample_rate, cfg.band_order)
        self._zi_tx = np.zeros((self._tx.shape[0], 2))
        self._zi_rx = np.zeros((self._rx.shape[0], 2))
        self._zi_n = np.zeros((self._rx.shape[0], 2))
        self._gain = 10.0 ** ((insertion_loss_db - cfg.attenuation_db) / 20.0)
        sigma = noise_sigma(cfg, r_ref)
        # white input scaled so the RX-shaped noise has variance sigma^2
        self._white = sigma / math.sqrt(_noise_gain(self._rx)) if sigma > 0 else 0.0
        if self._white > 0:
            # start the noise filter in its stationary state
            _, self._zi_n = signal.sosfilt(
                self._rx, self.rng.standard_normal(_WARMUP) * self._white, zi=self._zi_n)

    def process(self, x: np.ndarray) -> np.ndarray:
        y, self._zi_tx = signal.sosfilt(self._tx, x, zi=self._zi_tx)
        y, self._zi_rx = signal.sosfilt(self._rx, y * self._gain, zi=self._zi_rx)
        if self._white > 0:
            n, self._zi_n = signal.sosfilt(
                self._rx, self.rng.standard_normal(y.size) * self._white, zi=self._zi_n)
            y = y + n
        return y


def apply_channel(w: Waveform, cfg: ChannelConfig, insertion_loss_db: float = 0.0) -> Waveform:
    """TX band, flat calibrated loss, RX band, then RX-shaped Gaussian noise."""
    stream = ChannelStream(cfg, w.sample_rate, insertion_loss_db=insertion_loss_db)
    return w.with_samples(stream.process(w.samples))
