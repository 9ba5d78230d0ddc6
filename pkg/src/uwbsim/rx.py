"""Receiver-side detection: notch trigger, segment capture, correlated-slope
detection, bit recovery, pulse averaging and BER statistics.

Two detector paths are provided. ``cds`` follows the three-sample slope rule.
``amplitude`` samples each symbol at a calibrated peak instant and compares
with a threshold learned from a known preamble; with ``n_avg > 1`` it averages
the rectified peak amplitudes of the pulse group.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .waveform import BitStream, Waveform

log = logging.getLogger(__name__)

PREAMBLE_LEN = 64


@dataclass(frozen=True)
class DetectionConfig:
    """Detector settings.

    ``trigger_level`` and ``slope_threshold`` of ``None`` are calibrated from
    the preamble: the slope threshold becomes ``sigma_mult`` times the
    per-sample noise deviation of the "0" symbols.
    """

    notch_width_max: float = 500e-12
    trigger_level: float | None = None
    segment_len: float = 10e-9
    cds_spacing: float = 100e-12
    slope_threshold: float | None = None
    detector: str = "amplitude"
    sigma_mult: float = 3.0
    preamble_len: int = PREAMBLE_LEN

    def __post_init__(self):
        for name in ("notch_width_max", "segment_len", "cds_spacing", "sigma_mult"):
            if not getattr(self, name) > 0:
                raise ValueError(f"detection.{name} must be positive")
        for name in ("trigger_level", "slope_threshold"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"detection.{name} must be positive")
        if not 2 * self.cds_spacing < self.segment_len:
            raise ValueError("detection needs 2*cds_spacing < segment_len")
        if self.detector not in ("amplitude", "cds"):
            raise ValueError(f"detection.detector must be 'amplitude' or 'cds', got {self.detector!r}")
        if self.preamble_len < 2:
            raise ValueError("detection.preamble_len must be >= 2")


@dataclass(frozen=True)
class BerResult:
    n_bits: int
    n_errors: int
    ber: float
    ci95: tuple[float, float]

    def __post_init__(self):
        if not 0 <= self.n_errors <= self.n_bits:
            raise ValueError("need 0 <= n_errors <= n_bits")
        lo, hi = self.ci95
        if not 0 <= lo <= hi <= 1:
            raise ValueError("ci95 must be ordered within [0, 1]")

    @classmethod
    def from_counts(cls, n_bits: int, n_errors: int) -> "BerResult":
        ber = n_errors / n_bits if n_bits else 0.0
        return cls(int(n_bits), int(n_errors), ber, wilson_interval(n_errors, n_bits))

    def merge(self, other: "BerResult") -> "BerResult":
        return BerResult.from_counts(self.n_bits + other.n_bits, self.n_errors + other.n_errors)


@dataclass(frozen=True, eq=False)
class Segment:
    samples: np.ndarray
    sample_rate: float
    timestamp: float


@dataclass(frozen=True, eq=False)
class Capture:
    segments: list
    n_dropped: int

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.segments])


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def notch_triggers(w: Waveform, cfg: DetectionConfig, level: float | None = None) -> np.ndarray:
    """Times where ``|v|`` rises through the trigger level and falls back
    within ``notch_width_max``, with a ``segment_len`` hold-off after each.
    """
    if w.dt > cfg.cds_spacing / 4 * (1 + 1e-9):
        raise ValueError(
            f"trigger needs sample period <= cds_spacing/4 ({cfg.cds_spacing / 4:g} s), got {w.dt:g} s")
    level = cfg.trigger_level if level is None else level
    if level is None or not level > 0:
        raise ValueError("a positive trigger level is required")
    above = np.abs(w.samples) >= level
    edges = np.diff(above.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    ends = np.flatnonzero(edges == -1) + 1
    if above[0]:
        ends = ends[1:]  # excursion already under way at record start
    starts = starts[:ends.size]
    narrow = (ends - starts) * w.dt <= cfg.notch_width_max
    cand = w.t0 + starts[narrow] * w.dt
    out = []
    ready = -math.inf
    for t in cand:
        if t >= ready:
            out.append(t)
            ready = t + cfg.segment_len
    return np.array(out)


def capture_segments(w: Waveform, triggers, cfg: DetectionConfig) -> Capture:
    """Cut a ``segment_len`` window centred on each trigger."""
    n = int(round(cfg.segment_len * w.sample_rate))
    half = n // 2
    segs, dropped = [], 0
    for t in np.asarray(triggers, dtype=float):
        i0 = int(round((t - w.t0) * w.sample_rate)) - half
        if i0 < 0 or i0 + n > len(w):
            dropped += 1
            continue
        segs.append(Segment(w.samples[i0:i0 + n], w.sample_rate, float(t)))
    if dropped:
        log.warning("dropped %d segment(s) at the record edge", dropped)
    return Capture(segs, dropped)


def cds_detect(seg: Segment, cfg: DetectionConfig, threshold: float | None = None,
               peak_index: int | None = None) -> bool:
    """Three samples ``cds_spacing`` apart straddling the segment peak.

    EDGE1 is a rise of at least the threshold over the first interval, EDGE2
    the same over the second; a pulse is declared on EDGE1 and not EDGE2.
    """
    th = cfg.slope_threshold if threshold is None else threshold
    if th is None:
        raise ValueError("slope threshold not set")
    x = seg.samples
    k = max(1, int(round(cfg.cds_spacing * seg.sample_rate)))
    if x.size < 2 * k + 1:
        raise ValueError(f"segment of {x.size} samples too short for spacing {k}")
    p = int(np.argmax(x)) if peak_index is None else int(peak_index)
    p = min(max(p, k), x.size - 1 - k)
    v0, v1, v2 = x[p - k], x[p], x[p + k]
    return bool((v1 - v0 >= th) and not (v2 - v1 >= th))


def recover_bits(timestamps, bit_rate: float, n_expected: int, t_origin: float = 0.0) -> BitStream:
    """A slot is "1" iff some detection timestamp falls inside it."""
    bits = np.zeros(n_expected, dtype=np.uint8)
    ts = np.asarray(timestamps, dtype=float)
    if ts.size:
        slot = np.floor((ts - t_origin) * bit_rate).astype(np.int64)
        slot = slot[(slot >= 0) & (slot < n_expected)]
        bits[slot] = 1
    return BitStream(bits, bit_rate)


def average_pulses(peak_amps, n_avg: int, threshold: float) -> int:
    a = np.asarray(peak_amps, dtype=float)
    if n_avg < 1:
        raise ValueError("n_avg must be >= 1")
    if a.size != n_avg:
        raise ValueError(f"expected {n_avg} amplitudes, got {a.size}")
    return int(a.mean() >= threshold)


def ber_compute(tx: BitStream, rx: BitStream) -> BerResult:
    if len(tx) != len(rx):
        raise ValueError(f"length mismatch: {len(tx)} vs {len(rx)} bits")
    errors = int(np.count_nonzero(tx.bits != rx.bits))
    return BerResult.from_counts(len(tx), errors)


def analytic_ook_ber(snr_db: float) -> float:
    """``Q(sqrt(2*gamma))`` for linear SNR ``gamma``."""
    if snr_db == -math.inf:
        return 0.5
    g = 10.0 ** (snr_db / 10.0)
    return float(stats.norm.sf(math.sqrt(2.0 * g)))


def snr_for_ber(ber: float) -> float:
    """Inverse of :func:`analytic_ook_ber`, in dB."""
    if not 0 < ber < 0.5:
        raise ValueError("ber must be in (0, 0.5)")
    return 10.0 * math.log10(stats.norm.isf(ber) ** 2 / 2.0)


@dataclass(frozen=True, eq=False)
class SymbolDetector:
    """Synchronous detector calibrated on a known preamble.

    Attributes
    ----------
    peak_index : int
        Sample offset of the pulse peak inside a symbol slice.
    polarity : float
        Sign of the pulse at ``peak_index``.
    threshold : float
        Decision level for the per-bit statistic.
    noise_sigma : float
        Per-sample deviation measured on "0" symbols.
    """

    peak_index: int
    polarity: float
    threshold: float
    noise_sigma: float
    n_avg: int
    cfg: DetectionConfig
    sample_rate: float

    @classmethod
    def calibrate(cls, slices: np.ndarray, preamble_bits, n_avg: int,
                  cfg: DetectionConfig, sample_rate: float) -> "SymbolDetector":
        """``slices`` is ``(n_symbols, spp)`` covering the preamble symbols."""
        pb = np.repeat(np.asarray(preamble_bits, dtype=bool), n_avg)
        ones, zeros = slices[pb], slices[~pb]
        if ones.size == 0 or zeros.size == 0:
            raise ValueError("preamble needs both ones and zeros")
        template = ones.mean(axis=0) - zeros.mean(axis=0)
        p = int(np.argmax(np.abs(template)))
        pol = 1.0 if template[p] >= 0 else -1.0
        # "0" symbols right after a "0" carry no ringing from a previous pulse
        quiet = ~pb & ~np.concatenate(([False], pb[:-1]))
        sigma = float(np.std(slices[quiet] if quiet.any() else zeros))
        det = cls(p, pol, 0.0, sigma, n_avg, cfg, sample_rate)
        stat = det.bit_statistics(slices)
        bits = np.asarray(preamble_bits, dtype=bool)
        th = 0.5 * (stat[bits].mean() + stat[~bits].mean())
        return cls(p, pol, float(th), sigma, n_avg, cfg, sample_rate)

    def pulse_amplitudes(self, slices: np.ndarray) -> np.ndarray:
        """Per-pulse statistic, shape ``(n_bits, n_avg)``.

        Single pulses keep their sign; groups are rectified so averaging
        tracks pulse energy rather than relying on carrier phase.
        """
        v = slices[:, self.peak_index] * self.polarity
        if self.n_avg > 1:
            v = np.abs(v)
        return v.reshape(-1, self.n_avg)

    def bit_statistics(self, slices: np.ndarray) -> np.ndarray:
        return self.pulse_amplitudes(slices).mean(axis=1)

    def decide(self, slices: np.ndarray) -> np.ndarray:
        """Vectorized :func:`average_pulses` over every pulse group."""
        if self.cfg.detector == "cds":
            return self._decide_cds(slices)
        return (self.bit_statistics(slices) >= self.threshold).astype(np.uint8)

    def _decide_cds(self, slices: np.ndarray) -> np.ndarray:
        th = self.cfg.slope_threshold
        if th is None:
            th = self.cfg.sigma_mult * self.noise_sigma
        k = max(1, int(round(self.cfg.cds_spacing * self.sample_rate)))
        spp = slices.shape[1]
        p = min(max(self.peak_index, k), spp - 1 - k)
        x = slices * self.polarity
        e1 = x[:, p] - x[:, p - k] >= th
        e2 = x[:, p + k] - x[:, p] >= th
        hit = (e1 & ~e2).reshape(-1, self.n_avg)
        # a group is "1" when most of its pulses are detected
        return (hit.mean(axis=1) >= 0.5).astype(np.uint8)
