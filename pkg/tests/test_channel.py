import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uwbsim import parse_scenario
from uwbsim import runner
from uwbsim.channel import (SPEED_OF_LIGHT, ChannelConfig, ChannelStream, apply_channel,
                            free_space_path_loss, noise_sigma, rx_power_budget)
from uwbsim.waveform import Waveform, band_power, welch_psd

FS = 40e9


def friis_oracle(d, f):
    lam = SPEED_OF_LIGHT / f
    return 10 * math.log10((4 * math.pi * d / lam) ** 2)


def tone(f, n=200_000, amp=0.1):
    return Waveform(amp * np.sin(2 * np.pi * f * np.arange(n) / FS), FS)


def test_fspl_values():
    assert free_space_path_loss(1, 4e9) == pytest.approx(friis_oracle(1, 4e9), abs=1e-12)
    assert free_space_path_loss(1, 4e9) == pytest.approx(44.5, abs=0.1)
    lam = SPEED_OF_LIGHT / 4e9
    assert free_space_path_loss(lam / (4 * math.pi), 4e9) == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        free_space_path_loss(0, 4e9)


@given(st.floats(0.01, 100), st.floats(1e8, 1e10))
def test_fspl_doubling(d, f):
    assert free_space_path_loss(2 * d, f) - free_space_path_loss(d, f) == pytest.approx(
        20 * math.log10(2), abs=1e-9)


def test_budget_reference_point():
    b = rx_power_budget(-1, ChannelConfig())
    assert b.rx_power == pytest.approx(-59, abs=0.5)
    assert b.noise_floor == pytest.approx(-70, abs=0.2)
    assert b.snr == pytest.approx(11, abs=0.7)
    assert b.snr == b.rx_power - b.noise_floor


@given(st.floats(0.05, 50), st.floats(1.01, 3))
def test_rx_power_decreases_with_distance(d, k):
    a = rx_power_budget(-1, ChannelConfig(distance=d)).rx_power
    b = rx_power_budget(-1, ChannelConfig(distance=d * k)).rx_power
    assert b < a


def test_identity_channel_passes_inband_tone():
    cfg = ChannelConfig(noise_density=-math.inf,
                        gain_cal=free_space_path_loss(1, 4e9))
    w = tone(5e9)
    y = apply_channel(w, cfg).samples[20_000:]
    ratio = 10 * math.log10(np.mean(y**2) / np.mean(w.samples[20_000:] ** 2))
    assert abs(ratio) <= 0.5


def test_out_of_band_rejection():
    cfg = ChannelConfig(noise_density=-math.inf)
    lo = apply_channel(tone(1e9), cfg).samples[20_000:]
    hi = apply_channel(tone(4e9), cfg).samples[20_000:]
    assert 10 * math.log10(np.mean(hi**2) / np.mean(lo**2)) >= 20


def test_noise_variance_matches_density():
    cfg = ChannelConfig()
    target = noise_sigma(cfg) ** 2
    assert target == pytest.approx(10 ** (-161.8 / 10) * 1e-3 * 1.5e9 * 50)
    zeros = Waveform(np.zeros(4000), FS)
    var = [np.var(ChannelStream(cfg, FS, rng=np.random.default_rng(k)).process(zeros.samples))
           for k in range(100)]
    assert np.mean(var) == pytest.approx(target, rel=0.10)


def test_seed_determinism_and_chunking():
    cfg = ChannelConfig(rng_seed=7)
    x = tone(4e9, n=50_000).samples
    a = apply_channel(Waveform(x, FS), cfg).samples
    b = apply_channel(Waveform(x, FS), cfg).samples
    assert np.array_equal(a, b)
    st_ = ChannelStream(cfg, FS)
    c = np.concatenate([st_.process(x[:12_345]), st_.process(x[12_345:])])
    assert np.allclose(a, c, rtol=0, atol=1e-15)


def test_undersampled_rejected():
    with pytest.raises(ValueError):
        ChannelStream(ChannelConfig(), 10e9)


def test_config_invariants():
    with pytest.raises(ValueError):
        ChannelConfig(distance=0)
    with pytest.raises(ValueError):
        ChannelConfig(tx_band=(8e9, 3e9))
    with pytest.raises(ValueError):
        ChannelConfig(noise_density=float("nan"))


def test_budget_consistency_for_pulse_train():
    s = parse_scenario("[scenario]\nmode=wired_wireless\n[channel]\nnoise_density=-inf\n")
    setup = runner.tx_setup(s)
    fs = 80e9
    bits = np.resize(runner.payload_bits(s), 2000)
    edges = runner.gate_edges(runner._lead_delay(s), s.dll, bits.size, setup.t_sym)
    x = runner._render(setup, bits, edges, fs, int(edges[-1] * fs))
    g = math.sqrt(runner.dbm_to_power(-1) /
                  runner.dbm_to_power(runner.reference_power_dbm(setup, s, fs)))
    loss = runner.rx_insertion_loss_db(setup, s, fs)
    y = apply_channel(Waveform(g * x, fs), s.channel, insertion_loss_db=loss)
    sp = welch_psd(y.with_samples(y.samples[8000:]), 60_000)
    measured = band_power(sp, *s.channel.rx_band)
    assert measured == pytest.approx(rx_power_budget(-1, s.channel).rx_power, abs=1.0)
