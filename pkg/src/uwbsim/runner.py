"""End-to-end scenario execution, sweeps and CSV report writing.

Pipeline per run: PRBS payload behind a known preamble, aux-bit schedule and
DLL lock, tank/clip/gate/couple rendered in chunks, the channel for wireless
modes, then synchronous detection and BER. The transmit spectrum is rendered
separately at the full capture rate for the mask check.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from . import power as pw
from .channel import ChannelStream, band_sos, rx_power_budget
from .dll import (DllState, DllTrajectory, dll_run, gate_edges, insert_aux_bits,
                  symbol_timing)
from .mask import MaskResult, SpectralMask, load_mask, mask_check
from .rx import BerResult, SymbolDetector, ber_compute
from .scenario import Scenario, ScenarioError
from .tx import (ClipperConfig, TankParams, add_spur, chip_efficiency, clip_waveform,
                 detect_pulses, energy_per_bit, ook_gate, pa_output_wave)
from .waveform import (BitStream, Spectrum, Waveform, PSD_FLOOR_DBM_PER_MHZ,
                       dbm_to_power, first_order_coeffs, power_to_dbm, prbs_generate,
                       welch_psd, write_waveform)

MC_SAMPLES_PER_PERIOD = 22  # 88 samples per 4-period symbol, about 20 GS/s
DLL_SAMPLES_PER_PERIOD = 64
CHUNK = 1 << 20
REF_SYMBOLS = 4096
PREAMBLE_ORDER, PREAMBLE_SEED = 7, 0x5A
STREAM_NOISE = 1
SWEEP_COLUMNS = ("param", "value", "rx_power_dbm", "snr_db", "n_bits", "n_errors",
                 "ber", "ci_lo", "ci_hi", "n_avg")


class PipelineError(RuntimeError):
    """Failure inside a pipeline stage; the message names the stage."""


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def derive_seed(seed: int, index: int) -> int:
    """Independent per-point seed from ``(seed, index)``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class TxSetup:
    tank: TankParams
    clipper: ClipperConfig
    hp_corner: float
    n_periods: int
    t_sym: float
    t_bit: float
    spur_dbm: float | None
    spur_freq: float

    @property
    def f0(self) -> float:
        return self.tank.f0

    @property
    def symbol_rate(self) -> float:
        return 1.0 / self.t_sym


def tx_setup(s: Scenario) -> TxSetup:
    n, t_sym, t_bit = symbol_timing(s.tank.f0, s.bit_rate)
    tx = s.values["tx"]
    return TxSetup(s.tank, s.clipper.quantized(), tx["hp_corner"], n, t_sym, t_bit,
                   tx["spur_dbm"], tx["spur_freq"])


def preamble_bits(n: int) -> np.ndarray:
    return prbs_generate(PREAMBLE_ORDER, PREAMBLE_SEED, n).bits


def payload_bits(s: Scenario) -> np.ndarray:
    sc = s.values["scenario"]
    if sc["data"] == "zeros":
        return np.zeros(s.n_bits, dtype=np.uint8)
    if sc["data"] == "ones":
        return np.ones(s.n_bits, dtype=np.uint8)
    order = sc["prbs_order"]
    lfsr_seed = 1 + s.seed % ((1 << order) - 1)
    return prbs_generate(order, lfsr_seed, s.n_bits).bits


def lock_dll(s: Scenario, setup: TxSetup, bits: np.ndarray) -> tuple[DllState, DllTrajectory]:
    v = s.values["dll"]
    T = setup.tank.period
    sched = insert_aux_bits(BitStream(bits, 1.0 / setup.t_bit), T, aux_enabled=v["aux"])
    fs = DLL_SAMPLES_PER_PERIOD * setup.f0
    pa = pa_output_wave(setup.tank, v["duration"] + 4 * T, fs)
    return dll_run(sched, pa, s.dll, v["duration"], initial_delay=v["initial_delay"])


def tx_chunks(setup: TxSetup, sym_bits: np.ndarray, edges: np.ndarray, fs: float,
              n_total: int, chunk: int = CHUNK):
    """Radiated pulse train before the antenna band, unscaled, chunk by chunk."""
    b, a = first_order_coeffs("highpass", setup.hp_corner, fs)
    zi = np.zeros(1)
    amp = setup.tank.node_amplitude()
    w = 2 * np.pi * setup.tank.f_drive
    cl = setup.clipper
    e_idx = np.round(edges * fs)
    n_sym = sym_bits.size
    for a0 in range(0, n_total, chunk):
        n = min(chunk, n_total - a0)
        t = (a0 + np.arange(n)) / fs
        v2 = clip_waveform(Waveform(cl.v_mid + amp * np.sin(w * t), fs, a0 / fs), cl)
        k0 = max(0, int(np.searchsorted(e_idx, a0, "right")) - 1)
        k1 = min(n_sym, int(np.searchsorted(e_idx, a0 + n, "left")))
        if k1 > k0:
            v3 = ook_gate(v2, BitStream(sym_bits[k0:k1], setup.symbol_rate), cl,
                          edges[k0:k1 + 1]).samples
        else:
            v3 = np.full(n, cl.v_mid)
        y, zi = signal.lfilter(b, a, v3 - cl.v_mid, zi=zi)
        if setup.spur_dbm is not None:
            y = add_spur(Waveform(y, fs, a0 / fs), setup.spur_freq, setup.spur_dbm).samples
        yield a0, y


def _render(setup, sym_bits, edges, fs, n_total, band=None, order=2) -> np.ndarray:
    out = np.empty(n_total)
    if band is not None:
        sos = band_sos(band, fs, order)
        zi = np.zeros((sos.shape[0], 2))
    for a0, y in tx_chunks(setup, sym_bits, edges, fs, n_total):
        if band is not None:
            y, zi = signal.sosfilt(sos, y, zi=zi)
        out[a0:a0 + y.size] = y
    return out


def _reference_record(setup: TxSetup, s: Scenario, fs: float) -> np.ndarray:
    bits = prbs_generate(15, 1, REF_SYMBOLS).bits
    edges = gate_edges(_lead_delay(s), s.dll, bits.size, setup.t_sym)
    n_total = int(round(edges[-1] * fs))
    y = _render(setup, bits, edges, fs, n_total, s.channel.tx_band, s.channel.band_order)
    return y[int(round(100e-9 * fs)):]


def reference_power_dbm(setup: TxSetup, s: Scenario, fs: float) -> float:
    """Unscaled power after the TX antenna band for a balanced PRBS pattern.

    ``p_out`` is defined against this reference so all-zeros or all-ones
    payloads keep the same transmitter setting.
    """
    y = _reference_record(setup, s, fs)
    return float(power_to_dbm(np.mean(y**2) / 50.0))


def rx_insertion_loss_db(setup: TxSetup, s: Scenario, fs: float) -> float:
    """Power the RX band removes from the reference pulse train, in dB."""
    y = _reference_record(setup, s, fs)
    z = signal.sosfilt(band_sos(s.channel.rx_band, fs, s.channel.band_order), y)
    return float(10 * np.log10(np.mean(y**2) / np.mean(z**2)))


def _lead_delay(s: Scenario) -> float:
    """Delay that puts gate edges on the tank zero crossing (the lock point)."""
    from .dll import delay_for_lead
    return delay_for_lead(s.dll.T / 4, s.dll)


def measure_pulse_rate(s: Scenario, n_symbols: int = 100, fs: float | None = None,
                       rel_threshold: float = 0.5) -> float:
    """Detected pulse rate (Hz) of the radiated train with every gate open."""
    setup = tx_setup(s)
    fs = s.values["scenario"]["spectrum_rate"] if fs is None else fs
    bits = np.ones(n_symbols, dtype=np.uint8)
    edges = gate_edges(_lead_delay(s), s.dll, n_symbols, setup.t_sym)
    y = _render(setup, bits, edges, fs, int(round(edges[-1] * fs)))
    t = detect_pulses(Waveform(y, fs), rel_threshold * np.abs(y).max(), setup.tank.period / 4)
    t = t[t > edges[0] + 20 * setup.tank.period]  # skip the coupling transient
    if t.size < 2:
        raise PipelineError("fewer than two pulses detected")
    return (t.size - 1) / (t[-1] - t[0])


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    spectrum: Spectrum  # at 0 dBm reference output
    waveform: Waveform | None


def tx_spectrum(s: Scenario, setup: TxSetup, sym_bits: np.ndarray, delay: float,
                keep_waveform: bool = False) -> SpectrumResult:
    """Radiated PSD normalised to 0 dBm output, at the capture rate."""
    sc = s.values["scenario"]
    fs = sc["spectrum_rate"]
    n_total = int(round(sc["spectrum_duration"] * fs))
    n_sym = int(math.ceil(n_total / fs / setup.t_sym)) + 1
    bits = np.resize(sym_bits, n_sym)
    edges = gate_edges(delay, s.dll, n_sym, setup.t_sym)
    y = _render(setup, bits, edges, fs, n_total, s.channel.tx_band, s.channel.band_order)
    g = math.sqrt(dbm_to_power(0.0) / dbm_to_power(reference_power_dbm(setup, s, fs)))
    w = Waveform(y * g, fs)
    seg = min(n_total, int(round(1.5 * fs / sc["rbw"])))
    return SpectrumResult(welch_psd(w, seg), w if keep_waveform else None)


def shift_spectrum(sp: Spectrum, db: float) -> Spectrum:
    return Spectrum(sp.bin_freqs, np.maximum(sp.psd + db, PSD_FLOOR_DBM_PER_MHZ), sp.rbw)


def max_compliant_power(sp0: Spectrum, mask: SpectralMask, guard_db: float) -> float:
    """Largest output power (dBm) for which the scaled spectrum meets the mask."""
    return mask_check(sp0, mask, partial=True).min_margin - guard_db


@dataclass(frozen=True, eq=False)
class LinkReport:
    mode: str
    p_out: float
    ber: BerResult
    rx_power: float
    noise_floor: float
    snr: float
    tx_efficiency: float
    energy_per_bit: float
    data_rate: float
    p_dc_mw: float
    mask: MaskResult | None
    occupied_band: tuple | None
    dll_locked: bool
    dll_lock_error: float
    n_avg: int
    power_link: dict | None = None
    spectrum: Spectrum | None = None
    trajectory: DllTrajectory | None = None
    tx_waveform: Waveform | None = None

    @property
    def mask_margins(self) -> dict:
        if self.mask is None:
            return {}
        return {(m.f_lo, m.f_hi): m.margin for m in self.mask.margins}

    @property
    def pass_mask(self) -> bool | None:
        return None if self.mask is None else self.mask.passed

    def metrics(self) -> list[tuple[str, object]]:
        rows = [
            ("mode", self.mode),
            ("p_out_dbm", self.p_out),
            ("n_bits", self.ber.n_bits),
            ("n_errors", self.ber.n_errors),
            ("ber", self.ber.ber),
            ("ci_lo", self.ber.ci95[0]),
            ("ci_hi", self.ber.ci95[1]),
            ("n_avg", self.n_avg),
            ("rx_power_dbm", self.rx_power),
            ("noise_floor_dbm", self.noise_floor),
            ("snr_db", self.snr),
            ("tx_efficiency_pct", self.tx_efficiency),
            ("energy_per_bit_pj", self.energy_per_bit),
            ("data_rate_bps", self.data_rate),
            ("dll_locked", self.dll_locked),
            ("dll_lock_error_s", self.dll_lock_error),
        ]
        if self.mask is not None:
            rows += [("pass_mask", self.pass_mask), ("min_mask_margin_db", self.mask.min_margin)]
        if self.occupied_band is not None:
            rows += [("band_10db_lo_hz", self.occupied_band[0]),
                     ("band_10db_hi_hz", self.occupied_band[1])]
        if self.power_link is not None:
            rows += [(f"power_link.{k}", v) for k, v in self.power_link.items()]
        return rows

    def comparison(self) -> list[tuple[str, object]]:
        """Summary in the style of a published comparison table row."""
        return [
            ("Pout (dBm)", self.p_out),
            ("Power (mW)", self.p_dc_mw),
            ("Efficiency (%)", self.tx_efficiency),
            ("Data rate (Mbps)", self.data_rate / 1e6),
            ("Energy/bit (pJ)", self.energy_per_bit),
        ]


def _symbol_slices(y: np.ndarray, starts: np.ndarray, spp: int) -> np.ndarray:
    return y[starts[:, None] + np.arange(spp)[None, :]]


def run_ber(s: Scenario, setup: TxSetup, bits: np.ndarray, n_pre: int, delay: float,
            p_out: float) -> BerResult:
    """Render, propagate and detect; BER over the payload only."""
    sc = s.values["scenario"]
    fs = sc["sample_rate"] or MC_SAMPLES_PER_PERIOD * setup.f0
    sym_bits = np.repeat(bits, s.n_avg)
    edges = gate_edges(delay, s.dll, sym_bits.size, setup.t_sym)
    starts = np.round(edges[:-1] * fs).astype(np.int64)
    spp = int(math.floor(setup.t_sym * fs + 1e-9))
    n_total = int(starts[-1]) + 2 * spp
    wireless = s.mode != "wired_wired"
    g = math.sqrt(dbm_to_power(p_out) / dbm_to_power(reference_power_dbm(setup, s, fs)))

    y = np.empty(n_total)
    if not wireless:
        for a0, x in tx_chunks(setup, sym_bits, edges, fs, n_total):
            y[a0:a0 + x.size] = g * x
    else:
        rng = np.random.default_rng(np.random.SeedSequence([s.channel.rng_seed, STREAM_NOISE]))
        stream = ChannelStream(s.channel, fs, rng=rng,
                               insertion_loss_db=rx_insertion_loss_db(setup, s, fs))
        for a0, x in tx_chunks(setup, sym_bits, edges, fs, n_total):
            y[a0:a0 + x.size] = stream.process(g * x)

    slices = _symbol_slices(y, starts, spp)
    del y
    n_pre_sym = n_pre * s.n_avg
    det = SymbolDetector.calibrate(slices[:n_pre_sym], bits[:n_pre], s.n_avg,
                                   s.detection, fs)
    rx = det.decide(slices[n_pre_sym:])
    return ber_compute(BitStream(bits[n_pre:], 1.0), BitStream(rx, 1.0))


def power_link_summary(s: Scenario) -> dict:
    p = s.power_link
    v = s.values["power_link"]
    i_load = v["i_load"]
    tau = pw.regulation_time_constant(p)
    dt = tau / 100
    t, vr, c, lim = pw.simulate_regulation(p, 12 * tau, dt, step_time=tau,
                                           step_factor=v["source_step"])
    final = float(vr[-1])
    v_dc, ripple = pw.rectifier_output(final + p.diode_drop, p, i_load)
    return {
        "link_efficiency_pct": pw.link_efficiency(p, i_load),
        "i_load_a": i_load,
        "v_rect_v": v_dc,
        "ripple_v": ripple,
        "regulation_tau_s": tau,
        "regulation_settled": bool(abs(final - p.v_target) <= 0.02 * p.v_target),
        "regulation_peak_v": float(vr.max()),
        "limit_v": p.limit,
        "vco_free_rate_bps": pw.vco_free_max_rate(p.f_link),
    }


def run_scenario(s: Scenario, with_spectrum: bool = True, keep_waveform: bool = False,
                 mask: SpectralMask | None = None) -> LinkReport:
    """Execute one scenario; deterministic for a given seed."""
    stage = "setup"
    try:
        setup = tx_setup(s)
        n_pre = s.detection.preamble_len
        bits = np.concatenate([preamble_bits(n_pre), payload_bits(s)])
        sym_bits = np.repeat(bits, s.n_avg)

        stage = "dll"
        state, traj = lock_dll(s, setup, sym_bits)
        tail = traj.lock_error[int(traj.lock_error.size * 0.9):]
        lock_err = float(np.mean(tail))

        stage = "spectrum"
        tx = s.values["tx"]
        p_out = tx["p_out"]
        sp = None
        mres = None
        band = None
        wave = None
        if with_spectrum or p_out == "max":
            mask = load_mask() if mask is None else mask
            res = tx_spectrum(s, setup, sym_bits, state.delay, keep_waveform)
            if p_out == "max":
                p_out = max_compliant_power(res.spectrum, mask, tx["mask_guard_db"])
            sp = shift_spectrum(res.spectrum, p_out)
            mres = mask_check(sp, mask, partial=True)
            band = sp.occupied_band(10.0)
            if res.waveform is not None:
                wave = res.waveform.with_samples(
                    res.waveform.samples * 10 ** (p_out / 20))

        stage = "ber"
        ber = run_ber(s, setup, bits, n_pre, state.delay, p_out)

        stage = "report"
        if s.mode == "wired_wired":
            rx_p, floor, snr = p_out, -math.inf, math.inf
        else:
            rx_p, floor, snr = rx_power_budget(p_out, s.channel)
        data_rate = setup.symbol_rate / s.n_avg
        p_dc = tx["p_dc_mw"]
        pl = power_link_summary(s) if s.mode == "all_wireless" else None
        return LinkReport(
            mode=s.mode, p_out=float(p_out), ber=ber, rx_power=float(rx_p),
            noise_floor=float(floor), snr=float(snr),
            tx_efficiency=chip_efficiency(p_out, p_dc),
            energy_per_bit=energy_per_bit(p_dc, data_rate), data_rate=data_rate,
            p_dc_mw=p_dc, mask=mres, occupied_band=band, dll_locked=state.locked,
            dll_lock_error=lock_err, n_avg=s.n_avg, power_link=pl, spectrum=sp,
            trajectory=traj, tx_waveform=wave)
    except (ValueError, FloatingPointError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise PipelineError(f"stage {stage}: {exc}") from exc


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def write_report(rep: LinkReport, outdir) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "report.csv"
    _write_rows(p, ("metric", "value"), rep.metrics())
    written.append(p)
    p = out / "comparison.csv"
    _write_rows(p, ("metric", "value"), rep.comparison())
    written.append(p)
    if rep.spectrum is not None:
        p = out / "spectrum.csv"
        write_spectrum_csv(rep.spectrum, p)
        written.append(p)
    if rep.mask is not None:
        p = out / "mask.csv"
        _write_rows(p, ("f_lo_hz", "f_hi_hz", "limit_dbm_per_mhz", "max_psd_dbm_per_mhz",
                        "margin_db", "evaluated"),
                    [(m.f_lo, m.f_hi, m.limit, m.max_psd, m.margin, m.evaluated)
                     for m in rep.mask.margins])
        written.append(p)
    if rep.trajectory is not None:
        p = out / "dll_trajectory.csv"
        rep.trajectory.to_csv(p)
        written.append(p)
    if rep.tx_waveform is not None:
        p = out / "tx_waveform.bin"
        write_waveform(p, rep.tx_waveform)
        written.append(p)
    return written


def write_spectrum_csv(sp: Spectrum, path) -> None:
    _write_rows(Path(path), ("freq_hz", "psd_dbm_per_mhz"), zip(sp.bin_freqs, sp.psd))


def read_spectrum_csv(path) -> Spectrum:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    f, psd = data[:, 0], data[:, 1]
    rbw = float(f[1] - f[0]) if f.size > 1 else 1.0
    return Spectrum(f, psd, rbw)


def _sweep_point(args):
    raw, path, value, seed = args
    from .scenario import build_scenario
    s = build_scenario(raw).with_param(path, value).with_seed(seed)
    rep = run_scenario(s, with_spectrum=False)
    b = rep.ber
    return (path, value, rep.rx_power, rep.snr, b.n_bits, b.n_errors, b.ber,
            b.ci95[0], b.ci95[1], rep.n_avg)


def sweep(s: Scenario, param_path: str, values, jobs: int = 1, index_offset: int = 0) -> list[tuple]:
    """One run per value, seeded by ``(seed, index)``; rows in input order."""
    values = [str(v) for v in values]
    if not values:
        return []
    s.with_param(param_path, values[0])  # validates the path early
    tasks = [(s.raw, param_path, v, derive_seed(s.seed, index_offset + i))
             for i, v in enumerate(values)]
    if jobs <= 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_sweep_point, tasks))


def write_sweep(rows, path) -> None:
    _write_rows(Path(path), SWEEP_COLUMNS, rows)
