"""Spectral emission masks and compliance margins."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .waveform import Spectrum

DEFAULT_MASK = "fcc_indoor_mask.csv"


@dataclass(frozen=True)
class SpectralMask:
    """Sorted, non-overlapping ``(f_lo, f_hi, limit_dbm_per_mhz)`` bands.

    ``f_hi`` may be ``inf`` for an open-ended top band.
    """

    bands: tuple

    def __post_init__(self):
        bands = tuple((float(a), float(b), float(c)) for a, b, c in self.bands)
        if not bands:
            raise ValueError("mask needs at least one band")
        for lo, hi, lim in bands:
            if not (0 <= lo < hi) or not math.isfinite(lim) or math.isnan(hi):
                raise ValueError(f"invalid mask band ({lo}, {hi}, {lim})")
        for (_, hi, _), (lo, _, _) in zip(bands, bands[1:]):
            if lo < hi:
                raise ValueError("mask bands must be sorted and non-overlapping")
        object.__setattr__(self, "bands", bands)


@dataclass(frozen=True)
class BandMargin:
    f_lo: float
    f_hi: float
    limit: float
    max_psd: float
    margin: float
    evaluated: bool


@dataclass(frozen=True)
class MaskResult:
    margins: tuple
    passed: bool | None

    @property
    def min_margin(self) -> float:
        vals = [m.margin for m in self.margins if m.evaluated]
        return min(vals) if vals else math.nan


def load_mask(path=None) -> SpectralMask:
    """Read a mask CSV; the shipped FCC indoor mask when ``path`` is None."""
    if path is None:
        text = resources.files("uwbsim.data").joinpath(DEFAULT_MASK).read_text()
    else:
        with open(path, newline="") as fh:
            text = fh.read()
    rows = list(csv.DictReader(text.splitlines()))
    need = {"f_lo_hz", "f_hi_hz", "limit_dbm_per_mhz"}
    if not rows or not need <= set(rows[0]):
        raise ValueError(f"mask file needs columns {sorted(need)}")
    return SpectralMask(tuple((float(r["f_lo_hz"]), float(r["f_hi_hz"]),
                               float(r["limit_dbm_per_mhz"])) for r in rows))


def mask_check(spec: Spectrum, mask: SpectralMask, partial: bool = False) -> MaskResult:
    """Margin per band is the limit minus the highest PSD bin in the band.

    A band counts as evaluated only when the spectrum covers it; an
    open-ended top band needs the spectrum to extend past its lower edge.
    Unevaluated bands raise unless ``partial`` is set, in which case the
    verdict covers the evaluated bands only.
    """
    f = spec.bin_freqs
    out = []
    for lo, hi, lim in mask.bands:
        covered = f[0] <= lo and (hi <= f[-1] or (math.isinf(hi) and f[-1] > lo))
        sel = (f >= lo) & (f < hi)
        if not covered or not np.any(sel):
            out.append(BandMargin(lo, hi, lim, math.nan, math.nan, False))
            continue
        peak = float(spec.psd[sel].max())
        out.append(BandMargin(lo, hi, lim, peak, lim - peak, True))
    missing = [m for m in out if not m.evaluated]
    if missing and not partial:
        spans = ", ".join(f"[{m.f_lo:g}, {m.f_hi:g}]" for m in missing)
        raise ValueError(f"spectrum [{f[0]:g}, {f[-1]:g}] Hz does not cover mask band(s) {spans}")
    done = [m for m in out if m.evaluated]
    passed = all(m.margin >= 0 for m in done) if done else None
    return MaskResult(tuple(out), passed)
