import math

import numpy as np
import pytest

from uwbsim.mask import SpectralMask, load_mask, mask_check
from uwbsim.waveform import Spectrum

MASK = load_mask()


def flat_under(mask, offset, f_max=20e9, n=20001):
    f = np.linspace(0, f_max, n)
    psd = np.full(n, -200.0)
    for lo, hi, lim in mask.bands:
        sel = (f >= lo) & (f < hi)
        psd[sel] = lim - offset
    return Spectrum(f, psd, 1e6)


def test_shipped_mask_constants():
    assert [b[2] for b in MASK.bands] == [-75.3, -53.3, -51.3, -41.3, -51.3]
    assert MASK.bands[0][:2] == (0.96e9, 1.61e9)
    assert MASK.bands[3][:2] == (3.1e9, 10.6e9)
    assert math.isinf(MASK.bands[-1][1])


def test_uniform_margin():
    res = mask_check(flat_under(MASK, 10.0), MASK)
    assert res.passed
    assert res.min_margin == pytest.approx(10.0, abs=0.1)


def test_single_bin_violation():
    sp = flat_under(MASK, 10.0)
    i = np.searchsorted(sp.bin_freqs, 2.5e9)
    psd = sp.psd.copy()
    psd[i] = -51.3 + 3.0
    res = mask_check(Spectrum(sp.bin_freqs, psd, sp.rbw), MASK)
    assert res.passed is False
    band = [m for m in res.margins if m.f_lo == 1.99e9][0]
    assert band.margin == pytest.approx(-3.0, abs=0.1)
    assert all(m.margin >= 0 for m in res.margins if m is not band)


def test_partial_coverage():
    sp = flat_under(MASK, 5.0, f_max=8e9)
    with pytest.raises(ValueError):
        mask_check(sp, MASK)
    res = mask_check(sp, MASK, partial=True)
    flags = [m.evaluated for m in res.margins]
    assert flags == [True, True, True, False, False]
    assert res.passed


def test_pass_iff_all_margins_nonnegative():
    rng = np.random.default_rng(3)
    for _ in range(200):
        sp = flat_under(MASK, 0.0)
        psd = sp.psd + rng.normal(-1.0, 1.0, sp.psd.size)
        res = mask_check(Spectrum(sp.bin_freqs, psd, 1e6), MASK)
        assert res.passed == all(m.margin >= 0 for m in res.margins)


def test_mask_validation(tmp_path):
    with pytest.raises(ValueError):
        SpectralMask(((2e9, 3e9, -40.0), (1e9, 2.5e9, -40.0)))
    with pytest.raises(ValueError):
        SpectralMask(((1e9, 2e9, float("nan")),))
    p = tmp_path / "m.csv"
    p.write_text("f_lo_hz,f_hi_hz,limit_dbm_per_mhz\n1e9,2e9,-40\n")
    assert load_mask(p).bands == ((1e9, 2e9, -40.0),)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_mask(p)
