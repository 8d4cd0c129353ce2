"""``phytosim`` command line: simulate, classify, calibrate, titrate, validate.

Exit codes: 0 success (including an Indeterminate classification or a
failed validation, which are results), 2 bad input, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import AnalysisError, Label, analyze, fit_leak_decay, label_cycle
from .config import DocumentError, config_hash, load_schedule, parse_json, scenario_from_dict
from .groundtruth import (
    PASS_THRESHOLD, GroundTruthError, dawn_dusk_delta, malic_acid_percent,
    read_groundtruth_csv, read_titration_csv, validate_inverse_relation,
)
from .ingest import IngestError, read_csv, write_csv
from .physiology import DomainError
from .podsim import ConfigError, PathwayTrace, simulate_many
from .series import SeriesError

logger = logging.getLogger("phytosim")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _colour(text: str, code: str) -> str:
    if os.environ.get("PHYTOSIM_NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise _Fail(EXIT_INPUT, f"cannot read {path}: {exc}") from None


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, command: str, config: dict, seed: int, inputs: list[str]) -> dict:
    manifest = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "tool_version": __version__,
        "input_files": [{"path": p, "sha256": _sha256(Path(p))} for p in inputs],
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def write_trace_csv(trace: PathwayTrace, path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(trace.COLUMNS) + "\n")
        cols = trace.columns()
        for i in range(len(trace.timestamps)):
            fh.write(str(int(cols[0][i])) + "," + ",".join(f"{c[i]:.6g}" for c in cols[1:]) + "\n")


# --- commands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .plotting import plot_run

    docs, scenarios = [], []
    for path in args.scenario:
        doc = parse_json(_read_text(path), path)
        if args.seed is not None and isinstance(doc, dict):
            doc = dict(doc, seed=args.seed)
        try:
            sc = scenario_from_dict(doc, source=path)
            sc.check_stability()
        except (DomainError, TypeError) as exc:
            raise _Fail(EXIT_CONFIG, f"{path}: {exc}") from None
        docs.append(doc)
        scenarios.append(sc)
    results = simulate_many(scenarios, jobs=args.jobs)
    out = Path(args.out)
    for path, doc, res in zip(args.scenario, docs, results):
        target = out / Path(path).stem if len(args.scenario) > 1 else out
        target.mkdir(parents=True, exist_ok=True)
        write_csv(res.plant, target / "plant.csv")
        write_csv(res.control, target / "control.csv")
        write_csv(res.ambient, target / "ambient.csv")
        write_trace_csv(res.trace, target / "trace.csv")
        plot_run(target / "plot.svg", {"plant": res.plant, "control": res.control},
                 res.scenario.schedule, title=Path(path).stem, rh_channel="plant")
        write_manifest(target, "simulate", doc, res.scenario.rng_seed, [path])
        print(f"{path}: {len(res.plant)} samples -> {target}")
    return EXIT_OK


def cmd_classify(args) -> int:
    from .plotting import plot_run

    plant = read_csv(args.plant, "plant")
    control = read_csv(args.control, "control")
    ambient = read_csv(args.ambient, "ambient") if args.ambient else None
    schedule = load_schedule(_read_text(args.schedule), args.schedule)
    report = analyze(plant, control, schedule, ambient)
    result = report.result
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = {m.cycle_index: label_cycle(m) for m in report.metrics}
    doc = result.to_dict()
    doc["cycles"] = [
        {"cycle_index": m.cycle_index, "start": m.start, "end": m.end,
         "day_drawdown": m.day_drawdown, "night_drawdown": m.night_drawdown,
         "amplitude": m.amplitude, "day_fraction_index": m.day_fraction_index,
         "humidity_phase_corr": m.humidity_phase_corr, "flagged": m.flagged}
        for m in report.metrics
    ]
    doc["artifacts"] = [
        {"start": w.start, "end": w.end, "peak_excursion": w.peak_excursion,
         "cause_hint": w.cause_hint.value, "channel": w.channel}
        for w in report.artifacts
    ]
    _write_json(out / "classification.json", doc)
    with open(out / "cycles.csv", "w", newline="\n") as fh:
        fh.write("cycle_index,start,end,day_drawdown,night_drawdown,amplitude,"
                 "day_fraction_index,humidity_phase_corr,flagged,label\n")
        for m in report.metrics:
            d = "" if m.day_fraction_index is None else f"{m.day_fraction_index:.6g}"
            corr = "" if math.isnan(m.humidity_phase_corr) else f"{m.humidity_phase_corr:.6g}"
            fh.write(f"{m.cycle_index},{m.start},{m.end},{m.day_drawdown:.6g},"
                     f"{m.night_drawdown:.6g},{m.amplitude:.6g},{d},{corr},"
                     f"{int(m.flagged)},{labels[m.cycle_index].value}\n")
    plot_run(out / "classification.svg", {"corrected": report.corrected}, schedule,
             title=f"overall: {result.overall.value}",
             cycle_labels=[(m.start, m.end, labels[m.cycle_index].value) for m in report.metrics])
    inputs = [p for p in (args.plant, args.control, args.ambient, args.schedule) if p]
    write_manifest(out, "classify", {"inputs": [_sha256(Path(p)) for p in inputs]}, 0, inputs)
    colour = "32" if result.overall in (Label.C3, Label.CAM) else "33"
    print(f"overall: {_colour(result.overall.value, colour)} "
          f"(confidence {result.confidence:.2f}, {len(result.per_cycle)} cycles)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    series = read_csv(args.decay, "decay")
    fit = fit_leak_decay(series, args.c_amb_ppm, args.volume_cm3)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "leak_fit.json", fit.to_dict())
    write_manifest(out, "calibrate", {"volume_cm3": args.volume_cm3, "c_amb_ppm": args.c_amb_ppm,
                                      "input": _sha256(Path(args.decay))}, 0, [args.decay])
    print(f"k = {fit.k:.6g} 1/s, g_leak = {fit.g_leak:.6g} cm3/s, r^2 = {fit.r_squared:.4f}")
    if fit.warning:
        print(_colour(f"warning: {fit.warning}", "33"))
    return EXIT_OK


def cmd_titrate(args) -> int:
    records = read_titration_csv(_read_text(args.titration))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = [{"sample_time": r.sample_time, "phase": r.phase.value,
                 "malic_acid_percent": malic_acid_percent(r)} for r in records]
        deltas = dawn_dusk_delta(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "records": rows,
        "dawn_dusk_delta": [{"date": d, "delta_percent": v} for d, v in deltas],
        "warnings": sorted({str(w.message) for w in caught}),
    }
    _write_json(out / "titration.json", doc)
    write_manifest(out, "titrate", {"input": _sha256(Path(args.titration))}, 0, [args.titration])
    for row in rows:
        print(f"{row['sample_time']} {row['phase']:>4}: {row['malic_acid_percent']:.5f}%")
    return EXIT_OK


def cmd_validate(args) -> int:
    gt = read_groundtruth_csv(_read_text(args.groundtruth))
    pod = read_csv(args.pod, "pod")
    r = validate_inverse_relation(gt, pod)
    passed = r < PASS_THRESHOLD
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "validation.json", {"r": r, "threshold": PASS_THRESHOLD, "pass": passed})
    write_manifest(out, "validate", {"inputs": [_sha256(Path(args.groundtruth)), _sha256(Path(args.pod))]},
                   0, [args.groundtruth, args.pod])
    verdict = _colour("PASS", "32") if passed else _colour("FAIL", "31")
    print(f"inverse relation: {verdict} (r = {r:.3f})")
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phytosim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"phytosim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run scenario files")
    s.add_argument("--scenario", action="append", required=True, help="scenario JSON (repeatable)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--jobs", type=int, default=1, help="parallel scenarios")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("classify", help="label diel cycles of a plant/control pair")
    c.add_argument("plant")
    c.add_argument("control")
    c.add_argument("--schedule", required=True, help="light schedule JSON")
    c.add_argument("--ambient", help="ambient sensor CSV")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_classify)

    k = sub.add_parser("calibrate", help="fit an injection/removal decay")
    k.add_argument("decay")
    k.add_argument("--volume-cm3", type=float, required=True)
    k.add_argument("--c-amb-ppm", type=float, required=True)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("titrate", help="malic acid from titration records")
    t.add_argument("titration")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_titrate)

    v = sub.add_parser("validate", help="correlate reference assimilation with pod CO2")
    v.add_argument("groundtruth")
    v.add_argument("pod")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DocumentError, IngestError, SeriesError, AnalysisError, GroundTruthError,
            OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
