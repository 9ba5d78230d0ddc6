"""Sampled-signal substrate shared by every stage of the simulator.

Holds the value types (``Waveform``, ``Spectrum``, ``BitStream``), the PRBS
source, first-order filters, Welch PSD estimation calibrated in dBm/MHz, band
power integration and the raw binary waveform dump format.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

DEFAULT_SAMPLE_RATE = 80e9
R_REF = 50.0
PSD_FLOOR_DBM_PER_MHZ = -300.0

# Tap positions (1-indexed register bits) of maximal-length Fibonacci LFSRs.
PRBS_TAPS = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6),
    8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7), 11: (11, 9),
    12: (12, 6, 4, 1), 13: (13, 4, 3, 1), 14: (14, 5, 3, 1), 15: (15, 14),
    16: (16, 15, 13, 4), 17: (17, 14), 18: (18, 11), 19: (19, 6, 2, 1),
    20: (20, 17), 21: (21, 19), 22: (22, 21), 23: (23, 18),
    24: (24, 23, 22, 17), 25: (25, 22), 26: (26, 6, 2, 1),
    27: (27, 5, 2, 1), 28: (28, 25), 29: (29, 27), 30: (30, 6, 4, 1),
    31: (31, 28),
}

_DUMP_MAGIC = b"UWBW"
_DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIdQ")


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real voltage signal.

    Attributes
    ----------
    samples : ndarray
        Voltages in V.
    sample_rate : float
        Hz.
    t0 : float
        Time of the first sample in s.
    """

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size < 1:
            raise ValueError("waveform needs a 1-D array with at least one sample")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.t0)

    def power_w(self, r_ref: float = R_REF) -> float:
        """Mean power into ``r_ref`` in watts."""
        return float(np.mean(self.samples**2) / r_ref)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided PSD in dBm/MHz on a uniform ascending frequency grid."""

    bin_freqs: np.ndarray
    psd: np.ndarray
    rbw: float

    def __post_init__(self):
        f = np.asarray(self.bin_freqs, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        if f.shape != p.shape or f.ndim != 1 or f.size < 2:
            raise ValueError("bin_freqs and psd must be 1-D arrays of equal length >= 2")
        df = np.diff(f)
        if np.any(df <= 0) or not np.allclose(df, df[0], rtol=1e-9, atol=0):
            raise ValueError("spectrum bins must be uniform and ascending")
        if not self.rbw > 0:
            raise ValueError("rbw must be positive")
        if not np.all(np.isfinite(p)):
            raise ValueError("psd must be finite (use the floor clamp for empty bins)")
        object.__setattr__(self, "bin_freqs", f)
        object.__setattr__(self, "psd", p)

    @property
    def linear(self) -> np.ndarray:
        """PSD in mW/MHz."""
        return 10.0 ** (self.psd / 10.0)

    def occupied_band(self, drop_db: float = 10.0) -> tuple[float, float]:
        """Lowest and highest frequency whose PSD is within ``drop_db`` of the peak."""
        keep = self.bin_freqs[self.psd >= self.psd.max() - drop_db]
        return float(keep.min()), float(keep.max())


@dataclass(frozen=True, eq=False)
class BitStream:
    bits: np.ndarray
    bit_rate: float

    def __post_init__(self):
        b = np.asarray(self.bits).astype(np.uint8).ravel()
        if np.any(b > 1):
            raise ValueError("bits must be 0 or 1")
        if not self.bit_rate > 0:
            raise ValueError("bit_rate must be positive")
        object.__setattr__(self, "bits", b)

    def __len__(self):
        return self.bits.size

    @property
    def bit_period(self) -> float:
        return 1.0 / self.bit_rate


def prbs_generate(order: int = 15, seed: int = 1, n: int = 2**15 - 1,
                  bit_rate: float = 230e6) -> BitStream:
    """Maximal-length LFSR sequence.

    The register shifts left; the new bit is the XOR of the tapped register
    bits and is also the output bit. Because every output bit is shifted into
    the register, the sequence obeys ``s[i] = XOR_k s[i - tap_k]``, which lets
    everything after the first ``order`` bits be filled block-wise.
    """
    if order not in PRBS_TAPS:
        raise ValueError(f"unsupported PRBS order {order}; supported: 2..31")
    if n < 1:
        raise ValueError("n must be >= 1")
    taps = PRBS_TAPS[order]
    reg = int(seed) & ((1 << order) - 1)
    if reg == 0:
        raise ValueError("PRBS seed must be nonzero in the low `order` bits")

    out = np.empty(n, dtype=np.uint8)
    head = min(n, order)
    for i in range(head):
        fb = 0
        for tap in taps:
            fb ^= (reg >> (tap - 1)) & 1
        reg = ((reg << 1) | fb) & ((1 << order) - 1)
        out[i] = fb

    block = min(taps)
    i = head
    while i < n:
        m = min(block, n - i)
        acc = out[i - taps[0]:i - taps[0] + m].copy()
        for tap in taps[1:]:
            acc ^= out[i - tap:i - tap + m]
        out[i:i + m] = acc
        i += m
    return BitStream(out, bit_rate)


def welch_psd(w: Waveform, segment_len: int, overlap_fraction: float = 0.5,
              window: str = "hann", r_ref: float = R_REF) -> Spectrum:
    """One-sided Welch PSD in dBm/MHz into ``r_ref``.

    The estimate is density-scaled, so integrating the linear PSD over
    frequency returns the mean signal power. ``rbw`` is the equivalent noise
    bandwidth of the window.
    """
    n = len(w)
    segment_len = int(segment_len)
    if segment_len > n:
        raise ValueError(f"segment_len {segment_len} exceeds signal length {n}")
    if segment_len < 2:
        raise ValueError("segment_len must be >= 2")
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must be in [0, 1)")
    if window not in ("hann", "rect"):
        raise ValueError(f"unknown window {window!r}")
    win = signal.get_window("hann" if window == "hann" else "boxcar", segment_len)
    noverlap = int(round(segment_len * overlap_fraction))
    noverlap = min(noverlap, segment_len - 1)
    f, pxx = signal.welch(w.samples, fs=w.sample_rate, window=win,
                          nperseg=segment_len, noverlap=noverlap,
                          detrend=False, scaling="density", return_onesided=True)
    # V^2/Hz -> mW/MHz
    lin = pxx / r_ref * 1e3 * 1e6
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(lin)
    db = np.maximum(db, PSD_FLOOR_DBM_PER_MHZ)
    rbw = w.sample_rate * np.sum(win**2) / np.sum(win) ** 2
    return Spectrum(f, db, float(rbw))


def band_power(s: Spectrum, f_lo: float, f_hi: float) -> float:
    """Trapezoidal band power in dBm, linear interpolation at the band edges."""
    if not f_lo < f_hi:
        raise ValueError("band_power needs f_lo < f_hi")
    f = s.bin_freqs
    if f_lo < f[0] or f_hi > f[-1]:
        raise ValueError(
            f"band [{f_lo:g}, {f_hi:g}] Hz outside spectrum span [{f[0]:g}, {f[-1]:g}] Hz")
    lin = s.linear
    inside = (f > f_lo) & (f < f_hi)
    grid = np.concatenate(([f_lo], f[inside], [f_hi]))
    vals = np.interp(grid, f, lin)
    p_mw = np.trapezoid(vals, grid / 1e6)
    if p_mw <= 0:
        return float("-inf")
    return float(10.0 * np.log10(p_mw))


def first_order_coeffs(mode: str, corner: float, sample_rate: float,
                       dc_gain: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear (pre-warped) single-pole coefficients ``(b, a)``."""
    if mode not in ("highpass", "lowpass"):
        raise ValueError(f"mode must be 'highpass' or 'lowpass', got {mode!r}")
    if not 0 < corner < sample_rate / 2:
        raise ValueError(f"corner {corner:g} Hz must lie in (0, Nyquist={sample_rate / 2:g})")
    b, a = signal.butter(1, corner, btype=mode, fs=sample_rate)
    return b * dc_gain, a


def filter_first_order(w: Waveform, mode: str, corner: float,
                       dc_gain: float = 1.0) -> Waveform:
    """Single-pole high- or low-pass starting from rest.

    ``dc_gain`` scales the whole response; for the low-pass it is the DC gain,
    for the high-pass it is the passband gain.
    """
    b, a = first_order_coeffs(mode, corner, w.sample_rate, dc_gain)
    return w.with_samples(signal.lfilter(b, a, w.samples))


def power_to_dbm(p: float) -> float:
    if np.any(np.asarray(p) <= 0):
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(np.asarray(p, dtype=float) * 1e3)


def dbm_to_power(x: float) -> float:
    """dBm -> watts."""
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0) * 1e-3


def write_waveform(path, w: Waveform) -> None:
    """Raw little-endian dump: header then float64 samples."""
    data = _DUMP_HEADER.pack(_DUMP_MAGIC, _DUMP_VERSION, float(w.sample_rate), len(w))
    Path(path).write_bytes(data + w.samples.astype("<f8").tobytes())


def read_waveform(path) -> Waveform:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise ValueError(f"{path}: truncated waveform header")
    magic, version, fs, n = _DUMP_HEADER.unpack_from(raw)
    if magic != _DUMP_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != _DUMP_VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    body = raw[_DUMP_HEADER.size:]
    if len(body) != 8 * n:
        raise ValueError(f"{path}: expected {n} samples, found {len(body) // 8}")
    return Waveform(np.frombuffer(body, dtype="<f8").copy(), fs)
