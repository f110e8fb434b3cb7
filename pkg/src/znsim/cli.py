"""Command-line harness.

Exit codes: 0 success, 2 invalid inputs (parse/validation/config), 3 preset
assertion failure.  Diagnostics go to stderr; reports and traces are files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .engine import ConfigError, run_sim
from .presets import UnknownPreset, list_presets, run_preset
from .profile import DegenerateSamples, ProfileError, fit_occupancy_model, \
    load_device_file
from .report import build_report, report_json, write_report, write_trace_csv
from .workload import ParseError, ValidationError, load_jobspec

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ASSERTION = 3

_INPUT_ERRORS = (ParseError, ValidationError, ConfigError, ProfileError,
                 DegenerateSamples, FileNotFoundError, KeyError,
                 json.JSONDecodeError, ValueError, OSError)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INVALID


def cmd_run(args) -> int:
    try:
        geometry, profile = load_device_file(args.profile)
        for warning in profile.validation_warnings():
            print(f"warning: profile {profile.name}: {warning}",
                  file=sys.stderr)
        jobspec = load_jobspec(args.job, geometry)
        seed = args.seed if args.seed is not None else jobspec.seed
        trace = run_sim(geometry, profile, jobspec, seed=seed)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))
    report = build_report(trace, geometry, profile, jobspec, seed)
    os.makedirs(args.out, exist_ok=True)
    write_report(report, os.path.join(args.out, "report.json"))
    if args.trace_csv:
        write_trace_csv(trace, os.path.join(args.out, "trace.csv"), geometry)
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        samples = []
        with open(args.samples, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["occupancy", "latency_ms"]:
                return _fail("samples CSV must have header "
                             "'occupancy,latency_ms'")
            for row in reader:
                samples.append((float(row["occupancy"]),
                                float(row["latency_ms"])))
        model, rms = fit_occupancy_model(samples, args.segments)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))
    doc = {
        "anchors_occupancy_latency_ms": model.to_json(),
        "num_segments": args.segments,
        "rms_residual_ms": rms,
        "num_samples": len(samples),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_preset(args) -> int:
    try:
        outcome = run_preset(args.name)
    except UnknownPreset:
        return _fail(f"unknown preset {args.name!r}; "
                     f"try: {', '.join(list_presets())}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for case, report in outcome.reports.items():
            path = os.path.join(args.out, f"report_{case}.json")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(report_json(report))
        summary = {
            "preset": outcome.preset,
            "passed": outcome.passed,
            "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail}
                       for c in outcome.checks],
        }
        with open(os.path.join(args.out, "assertions.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    for check in outcome.checks:
        mark = "PASS" if check.ok else "FAIL"
        line = f"[{mark}] {outcome.preset}: {check.name}"
        if check.detail and not check.ok:
            line += f" ({check.detail})"
        print(line)
    return EXIT_OK if outcome.passed else EXIT_ASSERTION


def cmd_list_presets(_args) -> int:
    for name in list_presets():
        print(name)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="znsim",
        description="discrete-event ZNS SSD simulator and workload harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a jobspec against a device file")
    p.add_argument("--job", required=True, help="jobspec JSON path")
    p.add_argument("--profile", required=True, help="device file JSON path")
    p.add_argument("--seed", type=int, default=None,
                   help="override the jobspec seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trace-csv", action="store_true",
                   help="also write trace.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit an occupancy model to samples")
    p.add_argument("--samples", required=True,
                   help="CSV with header occupancy,latency_ms")
    p.add_argument("--segments", type=int, required=True)
    p.add_argument("--out", required=True, help="output model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("preset", help="run an observation preset")
    p.add_argument("name")
    p.add_argument("--out", default=None, help="directory for artifacts")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("list-presets", help="list preset names")
    p.set_defaults(func=cmd_list_presets)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
