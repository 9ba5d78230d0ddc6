import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from statsmodels.stats.proportion import proportion_confint

from uwbsim.rx import (BerResult, DetectionConfig, Segment, SymbolDetector,
                       analytic_ook_ber, average_pulses, ber_compute, capture_segments,
                       cds_detect, notch_triggers, recover_bits, snr_for_ber,
                       wilson_interval)
from uwbsim.waveform import BitStream, Waveform

FS = 100e9
CFG = DetectionConfig(trigger_level=0.5, slope_threshold=0.2)


def notch(width, amp=1.0, n=3000, at=1000):
    x = np.zeros(n)
    w = int(round(width * FS))
    x[at:at + w] = amp
    return Waveform(x, FS)


def test_notch_trigger_width():
    assert notch_triggers(notch(300e-12), CFG).size == 1
    assert notch_triggers(notch(800e-12), CFG).size == 0


def test_notch_trigger_refractory():
    period = 1 / 1.83e9
    t = np.arange(int(1e-6 * FS)) / FS
    ph = np.mod(t, period)
    x = np.exp(-0.5 * ((ph - period / 2) / 40e-12) ** 2)
    trig = notch_triggers(Waveform(x, FS), CFG)
    rate = (trig.size - 1) / (trig[-1] - trig[0])
    assert rate == pytest.approx(1 / CFG.segment_len, rel=0.06)
    assert np.all(np.diff(trig) >= CFG.segment_len)


def test_notch_trigger_needs_fine_sampling():
    with pytest.raises(ValueError):
        notch_triggers(Waveform(np.zeros(10), 5e9), CFG)


def test_capture_segments():
    w = Waveform(np.arange(5000, dtype=float), FS)
    cap = capture_segments(w, [10e-9, 20e-9, 30e-9], CFG)
    n = round(CFG.segment_len * FS)
    assert len(cap.segments) == 3 and cap.n_dropped == 0
    assert all(s.samples.size == n for s in cap.segments)
    assert cap.timestamps.tolist() == [10e-9, 20e-9, 30e-9]
    edge = capture_segments(w, [0.0], CFG)
    assert edge.n_dropped == 1 and not edge.segments


def triangle(amp, half_width_samples, n=200, centre=100):
    x = np.zeros(n)
    k = np.arange(n)
    return np.maximum(0, amp * (1 - np.abs(k - centre) / half_width_samples))


def test_cds_examples():
    seg = Segment(triangle(0.4, 20), FS, 0.0)
    assert cds_detect(seg, CFG)
    ramp = Segment(np.linspace(0, 5, 200), FS, 0.0)
    assert not cds_detect(ramp, CFG, peak_index=100)
    with pytest.raises(ValueError):
        cds_detect(Segment(np.zeros(10), FS, 0.0), CFG)


def test_cds_flat_noise_rarely_fires():
    hits = 0
    for seed in range(1000):
        x = np.random.default_rng(seed).standard_normal(1000) * 0.1 * CFG.slope_threshold / 3
        hits += cds_detect(Segment(x, FS, 0.0), CFG)
    assert hits / 1000 <= 0.01


def cds_oracle(x, k, th):
    """Some local maximum rises and falls by at least ``th`` within ``k`` samples."""
    for m in range(k, x.size - k):
        if x[m] >= x[m - 1] and x[m] >= x[m + 1]:
            if x[m] - x[m - k] >= th and x[m] - x[m + k] >= th:
                return True
    return False


def test_cds_matches_bruteforce_oracle():
    rng = np.random.default_rng(99)
    k = round(CFG.cds_spacing * FS)
    agree = 0
    for _ in range(1000):
        amp = rng.uniform(0.05, 1.0)
        hw = rng.integers(3, 60)
        c = rng.integers(40, 160)
        x = triangle(amp, hw, centre=c)
        agree += cds_detect(Segment(x, FS, 0.0), CFG) == cds_oracle(x, k, CFG.slope_threshold)
    assert agree == 1000


def test_recover_bits():
    assert recover_bits([0.5, 2.5], 1.0, 4).bits.tolist() == [1, 0, 1, 0]
    assert recover_bits([], 1.0, 4).bits.tolist() == [0, 0, 0, 0]
    assert recover_bits([1.1, 1.9], 1.0, 3).bits.tolist() == [0, 1, 0]


def test_average_pulses():
    assert average_pulses([0.6], 1, 0.5) == 1
    assert average_pulses([0.4], 1, 0.5) == 0
    assert average_pulses([1.0] * 5, 5, 0.5) == 1
    with pytest.raises(ValueError):
        average_pulses([1, 2], 3, 0.5)


def test_averaging_snr_gain(rng):
    x = rng.standard_normal((200_000, 5))
    gain = 10 * math.log10(np.var(x[:, 0]) / np.var(x.mean(axis=1)))
    assert gain == pytest.approx(10 * math.log10(5), abs=0.5)


def test_ber_compute_examples():
    a = BitStream(np.array([0, 1, 1, 0], np.uint8), 1.0)
    r = ber_compute(a, a)
    assert r.ber == 0 and r.ci95[0] == 0
    c = ber_compute(a, BitStream(1 - a.bits, 1.0))
    assert c.ber == 1
    r3 = BerResult.from_counts(30_000, 3)
    assert r3.ber == pytest.approx(1e-4)
    assert r3.ci95[0] == pytest.approx(3.4e-5, rel=0.05)
    assert r3.ci95[1] == pytest.approx(2.9e-4, rel=0.05)
    with pytest.raises(ValueError):
        ber_compute(a, BitStream(np.zeros(3, np.uint8), 1.0))


@given(n=st.integers(1, 10**6), frac=st.floats(0, 1))
@settings(max_examples=200)
def test_wilson_matches_reference(n, frac):
    k = int(round(frac * n))
    lo, hi = wilson_interval(k, n)
    rlo, rhi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert lo == pytest.approx(rlo, abs=1e-9)
    assert hi == pytest.approx(rhi, abs=1e-9)
    assert 0 <= lo <= k / n <= hi <= 1


@given(st.lists(st.tuples(st.integers(1, 10**5), st.floats(0, 1)), min_size=3, max_size=3))
def test_ber_merge_associative(parts):
    rs = [BerResult.from_counts(n, int(f * n)) for n, f in parts]
    left = rs[0].merge(rs[1]).merge(rs[2])
    right = rs[0].merge(rs[1].merge(rs[2]))
    assert left == right


def test_analytic_ber():
    assert analytic_ook_ber(-math.inf) == 0.5
    assert analytic_ook_ber(10.53) == pytest.approx(1e-6, rel=0.2)
    assert analytic_ook_ber(11.0) == pytest.approx(2.6e-7, rel=0.2)


@given(st.floats(1e-12, 0.49))
def test_snr_for_ber_inverts(b):
    assert analytic_ook_ber(snr_for_ber(b)) == pytest.approx(b, rel=1e-6)


def synthetic_slices(bits, n_avg, amp, sigma, rng, spp=40, peak=17):
    sym = np.repeat(bits, n_avg)
    x = rng.standard_normal((sym.size, spp)) * sigma
    x[:, peak] += sym * amp
    return x


def test_symbol_detector_noise_free_and_noisy(rng):
    pre = np.tile([1, 0, 1, 1, 0, 0, 1, 0], 8).astype(np.uint8)
    data = rng.integers(0, 2, 5000).astype(np.uint8)
    cfg = DetectionConfig()
    for n_avg in (1, 5):
        clean = synthetic_slices(np.concatenate([pre, data]), n_avg, 1.0, 0.0, rng)
        det = SymbolDetector.calibrate(clean[:pre.size * n_avg], pre, n_avg, cfg, FS)
        assert det.peak_index == 17
        assert np.array_equal(det.decide(clean[pre.size * n_avg:]), data)
    # signed single-sample detection follows Q(A / 2 sigma)
    sl = synthetic_slices(np.concatenate([pre, data]), 1, 1.0, 0.25, rng)
    det = SymbolDetector.calibrate(sl[:pre.size], pre, 1, cfg, FS)
    ber = np.mean(det.decide(sl[pre.size:]) != data)
    assert ber == pytest.approx(0.5 * math.erfc(2 / math.sqrt(2)), abs=0.01)


def test_cds_detector_path(rng):
    pre = np.tile([1, 0], 32).astype(np.uint8)
    data = rng.integers(0, 2, 20_000).astype(np.uint8)
    x = np.zeros((pre.size + data.size, 60))
    bits = np.concatenate([pre, data])
    x[bits == 1] = triangle(1.0, 8, n=60, centre=30)
    x += rng.standard_normal(x.shape) * 0.01
    cfg = DetectionConfig(detector="cds")
    det = SymbolDetector.calibrate(x[:pre.size], pre, 1, cfg, FS)
    rx = det.decide(x[pre.size:])
    assert np.all(rx[data == 1] == 1)
    # a slope of two noisy samples has deviation sigma*sqrt(2)
    fa = np.mean(rx[data == 0])
    assert fa == pytest.approx(0.5 * math.erfc(3 / math.sqrt(2) / math.sqrt(2)), abs=0.005)


def test_detection_config_invariants():
    with pytest.raises(ValueError):
        DetectionConfig(cds_spacing=6e-9, segment_len=10e-9)
    with pytest.raises(ValueError):
        DetectionConfig(notch_width_max=0)
    with pytest.raises(ValueError):
        DetectionConfig(detector="energy")
