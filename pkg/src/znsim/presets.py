"""Observation presets: canned workloads plus the assertions that pin the
simulator to the measured numbers.

Each preset builds one or more runs against the shipped device file (a few
override the reset anchor where the source measurement is a 95th
percentile rather than a mean), evaluates its assertion set, and returns a
pass/fail list.  All presets passing on the shipped profile is the
repository's top-level smoke test.

Zone counts and virtual durations are scaled down from the hour-long
hardware sweeps; every tolerance is unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib.resources import files

from . import device as dev
from .engine import run_sim
from .profile import (KERNEL_MERGE_SCHED, KERNEL_NOSCHED, USERSPACE_DIRECT,
                      geometry_from_dict, profile_from_dict)
from .report import build_report, percentile
from .workload import parse_jobspec

SIZES = (4096, 8192, 16384, 32768, 65536, 131072)


class UnknownPreset(KeyError):
    pass


@dataclass
class Check:
    name: str
    ok: bool
    detail: str


@dataclass
class PresetOutcome:
    preset: str
    checks: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def expect_close(self, name, actual, expected, rel):
        ok = expected != 0 and abs(actual - expected) <= rel * abs(expected)
        self.checks.append(Check(
            name, ok, f"actual={actual:.6g} expected={expected:.6g} "
                      f"rel_tol={rel:g}"))

    def expect(self, name, cond, detail=""):
        self.checks.append(Check(name, bool(cond), detail))


def _builtin_doc() -> dict:
    return json.loads(files("znsim").joinpath("profiles/zn540.json")
                      .read_text(encoding="utf-8"))


def _device(reset_anchor_1_ms: float | None = None):
    doc = _builtin_doc()
    if reset_anchor_1_ms is not None:
        anchors = [list(a) for a in doc["reset_model_ms"]]
        anchors[-1][1] = reset_anchor_1_ms
        doc["reset_model_ms"] = anchors
    return geometry_from_dict(doc["geometry"]), profile_from_dict(doc)


def _run(jobs, stack=None, seed=7, device=None):
    geometry, profile = device if device else _device()
    doc = {"jobs": jobs, "seed": seed}
    if stack:
        doc["stack"] = stack
    spec = parse_jobspec(doc, geometry)
    trace = run_sim(geometry, profile, spec)
    report = build_report(trace, geometry, profile, spec, seed)
    return trace, report


def _lats(trace, kind):
    """Ok latencies of one op class in submission order."""
    done = [c for c in trace.completions if c.op == kind and c.ok]
    done.sort(key=lambda c: c.order)
    return [c.latency_us for c in done]


def _median(trace, kind):
    return percentile(_lats(trace, kind), 50)


def _iops(report, kind):
    return report["op_classes"][kind]["throughput"]["iops"]


def _mib_s(report, kind):
    return report["op_classes"][kind]["throughput"]["mib_s"]


EXACT = 1e-9
MEDIUM = 1e-6
SAT = 0.05   # saturation throughputs emerge from queueing, wider band
TAIL = 0.02


# -- presets -------------------------------------------------------------------


def _qd1_job(op, size, op_count=64, zone_start=0, zones=1, **kw):
    job = {"op": op, "request_bytes": size, "queue_depth": 1,
           "zone_set": {"start": zone_start, "count": zones},
           "op_count": op_count}
    job.update(kw)
    return job


def preset_obs2_stacks() -> PresetOutcome:
    out = PresetOutcome("obs2-stacks")
    expected = {USERSPACE_DIRECT: 11.36, KERNEL_NOSCHED: 12.62,
                KERNEL_MERGE_SCHED: 14.47}
    for stack, want in expected.items():
        trace, report = _run([_qd1_job("write", 4096)],
                             stack={"stack": stack})
        out.reports[stack] = report
        out.expect_close(f"write 4KiB QD1 median on {stack}",
                         _median(trace, "write"), want, EXACT)
    return out


def preset_obs3_reqsize() -> PresetOutcome:
    out = PresetOutcome("obs3-reqsize")
    _, profile = _device()
    med = {}
    for op in ("write", "append"):
        for size in SIZES:
            trace, report = _run([_qd1_job(op, size, op_count=32)])
            med[op, size] = _median(trace, op)
            out.reports[f"{op}-{size}"] = report
            want = profile.base_latency(op, size, 4096, USERSPACE_DIRECT)
            out.expect_close(f"{op} {size}B QD1 median matches table",
                             med[op, size], want, EXACT)
    out.expect_close("write 4KiB latency", med["write", 4096], 11.36, EXACT)
    iops = {k: 1e6 / v for k, v in med.items()}
    out.expect("write IOPS peaks at 4 and 8 KiB",
               min(iops["write", 4096], iops["write", 8192])
               > max(iops["write", s] for s in SIZES[2:]))
    out.expect("append IOPS improves when doubling 4->8 KiB",
               iops["append", 8192] > iops["append", 4096])
    for op in ("write", "append"):
        bps = [s / med[op, s] for s in SIZES]
        out.expect(f"{op} byte throughput grows with request size",
                   all(b > a for a, b in zip(bps, bps[1:])),
                   f"MiB/s at QD1: {[round(b * 1e6 / 1048576) for b in bps]}")
    return out


def preset_obs4_append_vs_write() -> PresetOutcome:
    out = PresetOutcome("obs4-append-vs-write")
    trace_w, rep_w = _run([_qd1_job("write", 4096)])
    trace_a, rep_a = _run([_qd1_job("append", 8192)])
    out.reports["write-4k"] = rep_w
    out.reports["append-8k"] = rep_a
    out.expect_close("write 4KiB QD1 latency", _median(trace_w, "write"),
                     11.36, EXACT)
    out.expect_close("append 8KiB QD1 latency", _median(trace_a, "append"),
                     14.02, EXACT)
    _, profile = _device()
    for size in SIZES:
        w = profile.base_latency("write", size, 4096, USERSPACE_DIRECT)
        a = profile.base_latency("append", size, 4096, USERSPACE_DIRECT)
        out.expect(f"append slower than write at {size}B, gap <= 25%",
                   w < a <= 1.25 * w,
                   f"write={w} append={a} gap={(a - w) / w:.1%}")
    return out


def preset_obs5to7_scaling() -> PresetOutcome:
    out = PresetOutcome("obs5to7-scaling")
    x_append = {}
    for qd in (1, 2, 4, 8):
        _, report = _run([{"op": "append", "request_bytes": 4096,
                           "queue_depth": qd, "zone_set": 1,
                           "duration_virtual_s": 0.05}])
        x_append[qd] = _iops(report, "append")
        out.reports[f"append-qd{qd}"] = report
    out.expect_close("intra-zone append saturates near 132 KIOPS at QD4",
                     x_append[4], 132000, SAT)
    out.expect("append IOPS non-decreasing with QD",
               all(x_append[b] >= x_append[a] * 0.999
                   for a, b in ((1, 2), (2, 4), (4, 8))),
               f"{x_append}")
    out.expect("append IOPS flat past the QD4 knee (2%)",
               abs(x_append[8] - x_append[4]) <= 0.02 * x_append[4],
               f"qd4={x_append[4]:.0f} qd8={x_append[8]:.0f}")

    _, report = _run([{"op": "write", "request_bytes": 4096,
                       "queue_depth": 32, "zone_set": 1,
                       "duration_virtual_s": 0.15}],
                     stack={"stack": KERNEL_MERGE_SCHED})
    out.reports["merged-write-qd32"] = report
    out.expect_close("merged intra-zone writes near 293 KIOPS at QD32",
                     _iops(report, "write"), 293000, SAT)
    out.expect("merge rate at least 92%", report["merge_rate"] >= 0.92,
               f"merge_rate={report['merge_rate']:.4f}")

    _, report = _run([{"op": "read", "request_bytes": 4096,
                       "pattern": "random", "queue_depth": 128,
                       "zone_set": 8, "read_unwritten": True,
                       "duration_virtual_s": 0.05}])
    out.reports["read-qd128"] = report
    out.expect_close("reads near 424 KIOPS at QD128",
                     _iops(report, "read"), 424000, SAT)

    x_write = {}
    for zones in (1, 2, 4, 8, 14):
        _, report = _run([{"op": "write", "request_bytes": 4096,
                           "queue_depth": 1, "num_submitters": zones,
                           "zone_set": zones, "duration_virtual_s": 0.05}])
        x_write[zones] = _iops(report, "write")
        out.reports[f"interzone-write-{zones}z"] = report
    out.expect_close("inter-zone writes cap near 186 KIOPS",
                     x_write[14], 186045, SAT)
    out.expect_close("cap already binding at 8 zones",
                     x_write[8], 186045, SAT)
    out.expect("inter-zone write IOPS non-decreasing",
               all(x_write[b] >= x_write[a] * 0.999
                   for a, b in ((1, 2), (2, 4), (4, 8), (8, 14))),
               f"{x_write}")

    trace, report = _run([{"op": "write", "request_bytes": 4096,
                           "queue_depth": 1, "num_submitters": 16,
                           "zone_set": 16, "duration_virtual_s": 0.02}])
    out.reports["interzone-write-16z"] = report
    final = report["device_final"]
    out.expect("open/active zones never exceed the 14-zone limit",
               final["peak_active"] <= 14 and final["peak_open"] <= 14,
               f"peak_active={final['peak_active']}")
    errs = report["op_classes"]["write"]["errors"]
    out.expect("submitters beyond the limit are refused",
               errs.get(dev.TOO_MANY_ACTIVE, 0) >= 2, f"errors={errs}")
    out.expect_close("throughput still capped near 186 KIOPS",
                     _iops(report, "write"), 186045, SAT)
    return out


def preset_obs8_bandwidth() -> PresetOutcome:
    out = PresetOutcome("obs8-bandwidth")
    _, report = _run([{"op": "write", "request_bytes": 4096,
                       "queue_depth": 1, "num_submitters": 14,
                       "zone_set": 14, "duration_virtual_s": 0.05}])
    out.reports["write-4k-14z"] = report
    out.expect_close("4 KiB inter-zone writes cap near 726.74 MiB/s",
                     _mib_s(report, "write"), 726.74, SAT)
    for size, zones in ((8192, 3), (16384, 2), (16384, 4), (131072, 2)):
        _, report = _run([{"op": "write", "request_bytes": size,
                           "queue_depth": 1, "num_submitters": zones,
                           "zone_set": zones, "duration_virtual_s": 0.05}])
        out.reports[f"write-{size}-{zones}z"] = report
        out.expect_close(
            f"{size // 1024} KiB writes over {zones} zones reach the "
            "1155 MiB/s ceiling", _mib_s(report, "write"), 1155.0, SAT)
    return out


def preset_obs9_open_close() -> PresetOutcome:
    out = PresetOutcome("obs9-open-close")
    trace, report = _run([{"op": "open", "zone_set": 8}])
    out.reports["open"] = report
    lats = _lats(trace, "open")
    out.expect("eight zones opened", len(lats) == 8, f"n={len(lats)}")
    out.expect_close("explicit open costs 9.56 us", percentile(lats, 50),
                     9.56, EXACT)
    out.expect("every open identical", max(lats) - min(lats) < 1e-9)

    trace, report = _run([{"op": "close", "zone_set": 8, "stage": 0.05}])
    out.reports["close"] = report
    lats = _lats(trace, "close")
    out.expect_close("close costs 11.01 us", percentile(lats, 50), 11.01,
                     EXACT)

    _, profile = _device()
    trace, report = _run([_qd1_job("write", 4096, op_count=4)])
    out.reports["implicit-write"] = report
    lats = _lats(trace, "write")
    out.expect_close("first write to an implicitly opened zone pays 2.02 us",
                     lats[0] - lats[1], 2.02, 1e-6)
    out.expect("surcharge applies to the opening write only",
               abs(lats[1] - lats[2]) < 1e-9
               and abs(lats[2] - lats[3]) < 1e-9, f"lats={lats}")
    out.expect_close("later writes at the base cost", lats[1], 11.36, EXACT)

    trace, report = _run([_qd1_job("append", 4096, op_count=4)])
    out.reports["implicit-append"] = report
    lats = _lats(trace, "append")
    out.expect_close("first append to an implicitly opened zone pays 2.83 us",
                     lats[0] - lats[1], 2.83, 1e-6)
    base = profile.base_latency("append", 4096, 4096, USERSPACE_DIRECT)
    out.expect_close("later appends at the base cost", lats[1], base, EXACT)
    return out


def preset_obs10_finish() -> PresetOutcome:
    out = PresetOutcome("obs10-finish")
    geometry, profile = _device()
    cap = geometry.zone_cap_blocks
    levels = [0.001, 0.0625, 0.125, 0.25, 0.5, (cap - 1) / cap]
    medians = []
    for frac in levels:
        trace, report = _run([{"op": "finish", "zone_set": 2, "stage": frac,
                               "stabilize_s": 1.0}])
        out.reports[f"finish-{frac:.6f}"] = report
        lats = _lats(trace, "finish")
        actual_occ = round(frac * cap) / cap
        want = profile.finish_latency_ms(actual_occ) * 1e3
        out.expect_close(f"finish at occupancy {actual_occ:.6f} matches the "
                         "occupancy model", percentile(lats, 50), want, EXACT)
        medians.append(percentile(lats, 50))
    out.expect_close("model anchor: finish near-empty costs 907.51 ms",
                     profile.finish_latency_ms(0.001), 907.51, EXACT)
    out.expect_close("model anchor: finish near-full costs 3.07 ms",
                     profile.finish_latency_ms(1.0), 3.07, EXACT)
    out.expect_close("simulated near-empty finish", medians[0] / 1e3,
                     907.51, 0.003)
    out.expect_close("simulated near-full finish", medians[-1] / 1e3,
                     3.07, 0.003)
    out.expect("finish latency strictly decreasing with occupancy",
               all(b < a for a, b in zip(medians, medians[1:])),
               f"ms={[round(m / 1e3, 3) for m in medians]}")
    return out


def preset_obs10_reset() -> PresetOutcome:
    out = PresetOutcome("obs10-reset")
    geometry, profile = _device()
    cap = geometry.zone_cap_blocks
    levels = [1 / cap, 0.0625, 0.125, 0.25, 0.5, 1.0]
    medians = []
    for frac in levels:
        trace, report = _run([{"op": "reset", "zone_set": 2, "stage": frac,
                               "stabilize_s": 1.0}])
        out.reports[f"reset-{frac:.6f}"] = report
        lats = _lats(trace, "reset")
        actual_occ = round(frac * cap) / cap
        want = profile.reset_latency_ms(actual_occ) * 1e3
        out.expect_close(f"reset at occupancy {actual_occ:.6f} matches the "
                         "occupancy model", percentile(lats, 50), want, EXACT)
        medians.append(percentile(lats, 50))
    out.expect_close("reset of a half-full zone costs 11.60 ms",
                     medians[-2] / 1e3, 11.60, EXACT)
    out.expect_close("reset of a full zone costs 16.19 ms",
                     medians[-1] / 1e3, 16.19, EXACT)
    out.expect("reset latency non-decreasing with occupancy",
               all(b >= a for a, b in zip(medians, medians[1:])),
               f"ms={[round(m / 1e3, 3) for m in medians]}")

    trace, report = _run([{"op": "reset", "zone_set": 2, "stage": 0.5,
                           "finish_before_reset": True}])
    out.reports["reset-after-finish"] = report
    out.expect_close("finished half-full zone resets 3.08 ms slower: 14.68 ms",
                     _median(trace, "reset") / 1e3, 14.68, EXACT)

    trace, report = _run([{"op": "reset", "zone_set": 2}])
    out.reports["reset-empty"] = report
    out.expect_close("reset of an empty zone uses the occupancy-0 anchor",
                     _median(trace, "reset") / 1e3,
                     profile.reset_latency_ms(0.0), EXACT)
    return out


def _io_jobs_for_interference():
    return [
        {"op": "write", "request_bytes": 4096, "queue_depth": 2,
         "zone_set": {"start": 600, "count": 2}, "op_count": 1500},
        {"op": "append", "request_bytes": 4096, "queue_depth": 2,
         "zone_set": {"start": 610, "count": 2}, "op_count": 1500},
        {"op": "read", "request_bytes": 4096, "pattern": "random",
         "queue_depth": 2, "read_unwritten": True,
         "zone_set": {"start": 620, "count": 2}, "op_count": 1500},
    ]


def preset_obs12_io_under_reset() -> PresetOutcome:
    out = PresetOutcome("obs12-io-under-reset")
    base_jobs = _io_jobs_for_interference()
    trace_quiet, rep_quiet = _run(base_jobs)
    reset_job = {"op": "reset", "stage": 1.0,
                 "zone_set": {"start": 0, "count": 40}}
    trace_busy, rep_busy = _run(base_jobs + [reset_job])
    out.reports["without-resets"] = rep_quiet
    out.reports["with-resets"] = rep_busy
    out.expect("resets actually ran alongside the I/O",
               rep_busy["op_classes"]["reset"]["ok"] == 40)
    for kind in ("read", "write", "append"):
        quiet = _lats(trace_quiet, kind)
        busy = _lats(trace_busy, kind)
        out.expect(f"{kind} latency distribution untouched by resets",
                   quiet == busy,
                   f"n={len(quiet)} identical={quiet == busy}")
    return out


def preset_obs13_reset_under_io() -> PresetOutcome:
    # The isolated baseline is a 95th-percentile figure, so this preset
    # pins the full-zone reset anchor at that p95 value.
    out = PresetOutcome("obs13-reset-under-io")
    device = _device(reset_anchor_1_ms=17.94)
    reset_job = {"op": "reset", "stage": 1.0,
                 "zone_set": {"start": 0, "count": 12}}
    companions = {
        "isolated": (None, 17.94),
        "write": ({"op": "write", "request_bytes": 4096, "queue_depth": 1,
                   "zone_set": {"start": 600, "count": 2},
                   "duration_virtual_s": 0.5}, 32.00),
        "read": ({"op": "read", "request_bytes": 4096, "pattern": "random",
                  "queue_depth": 1, "read_unwritten": True,
                  "zone_set": {"start": 620, "count": 2},
                  "duration_virtual_s": 0.45}, 28.00),
        "append": ({"op": "append", "request_bytes": 4096, "queue_depth": 1,
                    "zone_set": {"start": 610, "count": 2},
                    "duration_virtual_s": 0.5}, 31.48),
    }
    for name, (job, want_ms) in companions.items():
        jobs = [reset_job] + ([job] if job else [])
        trace, report = _run(jobs, device=device)
        out.reports[name] = report
        p95 = percentile(_lats(trace, "reset"), 95) / 1e3
        label = ("isolated reset p95" if job is None
                 else f"reset p95 under concurrent {name}")
        out.expect_close(f"{label} is {want_ms} ms", p95, want_ms, TAIL)
    return out


def preset_appendix_knee() -> PresetOutcome:
    out = PresetOutcome("appendix-knee")
    depths = list(range(1, 9))
    med = {"append": {}, "write": {}}
    x = {"append": {}, "write": {}}
    for op in ("append", "write"):
        for qd in depths:
            trace, report = _run([{"op": op, "request_bytes": 4096,
                                   "queue_depth": qd, "zone_set": 1,
                                   "duration_virtual_s": 0.03}])
            out.reports[f"{op}-qd{qd}"] = report
            med[op][qd] = _median(trace, op)
            x[op][qd] = _iops(report, op)
    out.expect("write is faster at no concurrency (QD1)",
               med["write"][1] < med["append"][1],
               f"write={med['write'][1]:.2f} append={med['append'][1]:.2f}")
    for qd in (2, 3, 4):
        out.expect(f"append beats the serialized write at concurrency {qd}",
                   med["append"][qd] < med["write"][qd],
                   f"append={med['append'][qd]:.2f} "
                   f"write={med['write'][qd]:.2f}")
    for op in ("append", "write"):
        incs = [med[op][c + 1] - med[op][c] for c in range(5, 8)]
        out.expect(f"{op} latency grows linearly past the knee",
                   all(abs(b - a) <= 0.01 * a for a, b in zip(incs, incs[1:])),
                   f"increments={[round(i, 3) for i in incs]}")
        out.expect(f"{op} throughput flat past the knee",
                   all(abs(x[op][c] - x[op][4]) <= 0.02 * x[op][4]
                       for c in (5, 6, 7, 8)),
                   f"iops={[round(x[op][c]) for c in depths]}")
    return out


PRESETS = {
    "obs2-stacks": preset_obs2_stacks,
    "obs3-reqsize": preset_obs3_reqsize,
    "obs4-append-vs-write": preset_obs4_append_vs_write,
    "obs5to7-scaling": preset_obs5to7_scaling,
    "obs8-bandwidth": preset_obs8_bandwidth,
    "obs9-open-close": preset_obs9_open_close,
    "obs10-finish": preset_obs10_finish,
    "obs10-reset": preset_obs10_reset,
    "obs12-io-under-reset": preset_obs12_io_under_reset,
    "obs13-reset-under-io": preset_obs13_reset_under_io,
    "appendix-knee": preset_appendix_knee,
}


def list_presets() -> list[str]:
    return list(PRESETS)


def run_preset(name: str) -> PresetOutcome:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise UnknownPreset(name) from None
    return builder()
