"""Scenario files: sectioned key=value text parsed strictly into typed configs.

Every key has a default, so a file only needs ``[scenario] mode``. Unknown
sections or keys are rejected with a suggestion. Sweeps address keys as
``section.key``.
"""
from __future__ import annotations

import configparser
import difflib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelConfig
from .dll import DllConfig, STEPS_PER_PERIOD
from .power import PowerLinkParams
from .rx import DetectionConfig
from .tx import ClipperConfig, TankParams

MODES = ("wired_wired", "wired_wireless", "all_wireless")
DATA_PATTERNS = ("prbs", "zeros", "ones")

# Common misspellings or paraphrases mapped to the canonical key.
ALIASES = {
    "antenna_gain": "gain_cal",
    "antena_gain": "gain_cal",
    "gain": "gain_cal",
    "snr": "noise_density",
    "rate": "bit_rate",
    "power": "p_out",
    "pout": "p_out",
    "q": "q_rx",
}


class ScenarioError(ValueError):
    """Invalid scenario file or parameter, with the offending key path."""


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN not allowed")
    return v


def _pos_float(s: str) -> float:
    v = _float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else _pos_float(s)


def _opt_level(s: str):
    return None if s.strip().lower() in ("", "none", "off") else _float(s)


def _int(s: str) -> int:
    return int(float(s)) if "e" in s.lower() else int(s, 0)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _p_out(s: str):
    return "max" if s.strip().lower() == "max" else _float(s)


def _choice(*opts):
    def conv(s: str) -> str:
        t = s.strip()
        if t not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return t
    return conv


SCHEMA: dict[str, dict[str, tuple]] = {
    "scenario": {
        "mode": (_choice(*MODES), "wired_wired"),
        "bit_rate": (_pos_float, 230e6),
        "n_bits": (_int, 2000),
        "n_avg": (_int, 1),
        "seed": (_int, 1),
        "data": (_choice(*DATA_PATTERNS), "prbs"),
        "prbs_order": (_int, 15),
        "sample_rate": (_opt_float, None),
        "spectrum_rate": (_pos_float, 80e9),
        "spectrum_duration": (_pos_float, 10e-6),
        "rbw": (_pos_float, 1e6),
    },
    "tank": {
        "L": (_pos_float, 10e-9),
        "C": (_pos_float, 3.026e-12),
        "r_loss": (_pos_float, 2.2),
        "r_antenna": (_pos_float, 0.6),
        "drive_amp": (_float, 0.0246),
        "drive_freq": (_opt_float, None),
    },
    "clipper": {
        "v_max": (_float, 0.805),
        "v_mid": (_float, 0.6),
        "dac_bits": (_int, 8),
        "dac_fullscale": (_pos_float, 1.2),
        "knee_width": (_float, 0.0),
    },
    "tx": {
        "p_out": (_p_out, -1.0),
        "hp_corner": (_pos_float, 1e9),
        "p_dc_mw": (_pos_float, 3.72),
        "spur_dbm": (_opt_level, None),
        "spur_freq": (_pos_float, 915e6),
        "mask_guard_db": (_float, 0.01),
    },
    "dll": {
        "aux": (_bool, True),
        "duration": (_pos_float, 2e-6),
        "loop_gain": (_pos_float, 1e8),
        "loop_tau": (_pos_float, 10e-9),
        "rc_tau": (_pos_float, 20e-9),
        "delay_min": (_opt_float, None),
        "delay_max": (_opt_float, None),
        "initial_delay": (_opt_float, None),
        "steps_per_period": (_pos_float, STEPS_PER_PERIOD),
        "pd_offset": (_float, 1e-4),
    },
    "channel": {
        "distance": (_pos_float, 1.0),
        "center_freq": (_pos_float, 4e9),
        "tx_band_lo": (_pos_float, 3.3e9),
        "tx_band_hi": (_pos_float, 8e9),
        "rx_band_lo": (_pos_float, 2.4e9),
        "rx_band_hi": (_pos_float, 8e9),
        "gain_cal": (_float, -13.5),
        "noise_density": (_float, -161.8),
        "noise_bw": (_pos_float, 1.5e9),
        "band_order": (_int, 2),
    },
    "detection": {
        "detector": (_choice("amplitude", "cds"), "amplitude"),
        "notch_width_max": (_pos_float, 500e-12),
        "trigger_level": (_opt_float, None),
        "segment_len": (_pos_float, 10e-9),
        "cds_spacing": (_pos_float, 100e-12),
        "slope_threshold": (_opt_float, None),
        "sigma_mult": (_pos_float, 3.0),
        "preamble_len": (_int, 64),
    },
    "power_link": {
        "f_link": (_pos_float, 1.5e6),
        "k": (_pos_float, 0.02359),
        "q_tx": (_pos_float, 100.0),
        "q_rx": (_pos_float, 92.0),
        "l_rx": (_pos_float, 2e-6),
        "v_source": (_pos_float, 15.0),
        "diode_drop": (_pos_float, 0.4),
        "c_filter": (_pos_float, 10e-6),
        "v_target": (_pos_float, 12.0),
        "detune_gain": (_pos_float, 1e-8),
        "c_min_ratio": (_pos_float, 0.5),
        "i_load": (_pos_float, 4e-3),
        "source_step": (_pos_float, 1.5),
    },
}

REQUIRED_SECTIONS = {
    "wired_wired": (),
    "wired_wireless": (),
    "all_wireless": ("power_link",),
}


def valid_paths() -> list[str]:
    return [f"{sec}.{key}" for sec, keys in SCHEMA.items() for key in keys]


def _suggest(word: str, pool) -> str:
    cand = ALIASES.get(word.lower())
    if cand in pool:
        return cand
    m = difflib.get_close_matches(word, list(pool), n=1, cutoff=0.6)
    return m[0] if m else ""


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated scenario. ``raw`` keeps the source strings for re-derivation."""

    mode: str
    tank: TankParams
    clipper: ClipperConfig
    dll: DllConfig
    channel: ChannelConfig
    detection: DetectionConfig
    power_link: PowerLinkParams | None
    bit_rate: float
    n_bits: int
    n_avg: int
    seed: int
    values: dict = field(repr=False)
    raw: dict = field(repr=False)

    def get(self, path: str):
        sec, key = path.split(".", 1)
        return self.values[sec][key]

    def with_param(self, path: str, value) -> "Scenario":
        """Copy with one key replaced; the value is validated like file input."""
        sec, _, key = path.partition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ScenarioError(
                f"unknown parameter path {path!r}; valid paths: {', '.join(valid_paths())}")
        raw = {s: dict(kv) for s, kv in self.raw.items()}
        raw.setdefault(sec, {})[key] = str(value)
        return build_scenario(raw)

    def with_seed(self, seed: int) -> "Scenario":
        return self.with_param("scenario.seed", seed)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, strict=True,
                                   inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (L, C)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: parse error: {exc}") from exc
    raw = {sec: dict(cp[sec]) for sec in cp.sections()}
    try:
        return build_scenario(raw)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc.strerror}") from exc
    return parse_scenario(text, str(path))


def build_scenario(raw: dict) -> Scenario:
    for sec, kv in raw.items():
        if sec not in SCHEMA:
            hint = _suggest(sec, SCHEMA)
            raise ScenarioError(f"unknown section [{sec}]" + (f"; did you mean [{hint}]?" if hint else ""))
        for key in kv:
            if key not in SCHEMA[sec]:
                hint = _suggest(key, SCHEMA[sec])
                if not hint:
                    # the key may belong to another section
                    for other, keys in SCHEMA.items():
                        if _suggest(key, keys) and other != sec:
                            hint = f"{other}.{_suggest(key, keys)}"
                            break
                raise ScenarioError(
                    f"unknown key {sec}.{key}" + (f"; did you mean {hint!r}?" if hint else ""))

    vals: dict[str, dict] = {}
    for sec, keys in SCHEMA.items():
        vals[sec] = {}
        for key, (conv, default) in keys.items():
            if key in raw.get(sec, {}):
                try:
                    vals[sec][key] = conv(raw[sec][key])
                except (ValueError, TypeError) as exc:
                    raise ScenarioError(f"{sec}.{key}: invalid value {raw[sec][key]!r} ({exc})") from None
            else:
                vals[sec][key] = default

    sc = vals["scenario"]
    mode = sc["mode"]
    if "scenario" not in raw or "mode" not in raw["scenario"]:
        raise ScenarioError("missing required key scenario.mode")
    for need in REQUIRED_SECTIONS[mode]:
        if need not in raw:
            raise ScenarioError(f"mode {mode} requires section [{need}]")
    if sc["n_bits"] < 1:
        raise ScenarioError("scenario.n_bits must be >= 1")
    if sc["n_avg"] < 1:
        raise ScenarioError("scenario.n_avg must be >= 1")

    def build(sec, fn):
        try:
            return fn(vals[sec])
        except ValueError as exc:
            raise ScenarioError(f"[{sec}] {exc}") from None

    tank = build("tank", lambda v: TankParams(**v))
    clipper = build("clipper", lambda v: ClipperConfig(**v))

    def make_dll(v):
        T = tank.period
        kw = dict(loop_gain=v["loop_gain"], loop_tau=v["loop_tau"], rc_tau=v["rc_tau"],
                  step_dt=T / v["steps_per_period"], pd_offset=v["pd_offset"])
        if v["delay_min"] is not None:
            kw["delay_min"] = v["delay_min"]
        if v["delay_max"] is not None:
            kw["delay_max"] = v["delay_max"]
        return DllConfig.for_period(T, **kw)

    dll = build("dll", make_dll)
    d0 = vals["dll"]["initial_delay"]
    if d0 is not None and not dll.delay_min <= d0 <= dll.delay_max:
        raise ScenarioError("dll.initial_delay must lie within [delay_min, delay_max]")
    channel = build("channel", lambda v: ChannelConfig(
        distance=v["distance"], center_freq=v["center_freq"],
        tx_band=(v["tx_band_lo"], v["tx_band_hi"]), rx_band=(v["rx_band_lo"], v["rx_band_hi"]),
        gain_cal=v["gain_cal"], noise_density=v["noise_density"], rng_seed=sc["seed"],
        noise_bw=v["noise_bw"], band_order=v["band_order"]))
    detection = build("detection", lambda v: DetectionConfig(**v))
    power_link = None
    if mode == "all_wireless":
        power_link = build("power_link", lambda v: PowerLinkParams(
            **{k: x for k, x in v.items() if k not in ("i_load", "source_step")}))
    return Scenario(mode, tank, clipper, dll, channel, detection, power_link,
                    sc["bit_rate"], sc["n_bits"], sc["n_avg"], sc["seed"], vals,
                    {s: dict(kv) for s, kv in raw.items()})
