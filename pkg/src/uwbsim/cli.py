"""Command-line front end: ``uwbsim run | sweep | mask``.

Exit codes: 0 ok, 1 usage, 2 invalid configuration, 3 mask failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .mask import load_mask, mask_check
from .runner import (PipelineError, fmt, read_spectrum_csv, run_scenario, sweep,
                     write_report, write_sweep)
from .scenario import ScenarioError, load_scenario
from .waveform import read_waveform, welch_psd

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_MASK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uwbsim", description="Clip-and-gate UWB link simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(q):
        q.add_argument("scenario", help="scenario file")
        q.add_argument("--seed", type=int, help="override scenario.seed")
        q.add_argument("--out", default="out", help="output directory (default: out)")

    r = sub.add_parser("run", help="run one scenario and write reports")
    common(r)
    r.add_argument("--dump-waveform", action="store_true",
                   help="also write the radiated waveform as tx_waveform.bin")
    r.add_argument("--no-spectrum", action="store_true", help="skip the spectrum and mask stage")

    s = sub.add_parser("sweep", help="sweep one parameter and write sweep.csv")
    common(s)
    s.add_argument("--param", required=True, help="section.key to sweep")
    s.add_argument("--values", default="", help="comma-separated values")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--start-index", type=int, default=0,
                   help="seed index of the first value, for splitting a sweep")

    m = sub.add_parser("mask", help="check a spectrum CSV or waveform dump against a mask")
    m.add_argument("spectrum", help="spectrum CSV or .bin waveform dump")
    m.add_argument("--mask", help="mask CSV (default: shipped FCC indoor mask)")
    m.add_argument("--partial", action="store_true", help="allow bands the spectrum does not cover")
    m.add_argument("--rbw", type=float, default=1e6, help="RBW for waveform dumps (Hz)")
    return p


def _cmd_run(a) -> int:
    s = load_scenario(a.scenario)
    if a.seed is not None:
        s = s.with_seed(a.seed)
    rep = run_scenario(s, with_spectrum=not a.no_spectrum, keep_waveform=a.dump_waveform)
    for path in write_report(rep, a.out):
        print(path)
    return EXIT_OK


def _cmd_sweep(a) -> int:
    s = load_scenario(a.scenario)
    if a.seed is not None:
        s = s.with_seed(a.seed)
    if a.jobs < 1:
        raise _UsageError("--jobs must be >= 1")
    values = [v.strip() for v in a.values.split(",") if v.strip()]
    rows = sweep(s, a.param, values, jobs=a.jobs, index_offset=a.start_index)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep(rows, out / "sweep.csv")
    print(out / "sweep.csv")
    return EXIT_OK


def _cmd_mask(a) -> int:
    path = Path(a.spectrum)
    if path.suffix == ".bin":
        w = read_waveform(path)
        seg = min(len(w), int(round(1.5 * w.sample_rate / a.rbw)))
        sp = welch_psd(w, seg)
    else:
        sp = read_spectrum_csv(path)
    res = mask_check(sp, load_mask(a.mask), partial=a.partial)
    print("f_lo_hz,f_hi_hz,limit_dbm_per_mhz,margin_db,evaluated")
    for m in res.margins:
        print(",".join(fmt(v) for v in (m.f_lo, m.f_hi, m.limit, m.margin, m.evaluated)))
    print(f"pass_mask,{fmt(res.passed) if res.passed is not None else 'undefined'}")
    return EXIT_OK if res.passed else EXIT_MASK


class _UsageError(Exception):
    pass


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": _cmd_run, "sweep": _cmd_sweep, "mask": _cmd_mask}[a.cmd](a)
    except _UsageError as exc:
        print(f"uwbsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"uwbsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, ValueError, OSError) as exc:
        print(f"uwbsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
