"""Run statistics: nearest-rank percentiles, the machine-readable report
and the completion-ordered trace CSV.

The report is schema-stable and free of wall-clock state, so two runs of
the same inputs and seed serialize to byte-identical JSON.
"""

from __future__ import annotations

import csv
import json
import math

from . import device as dev
from .engine import Trace

REPORT_VERSION = 1
OP_CLASSES = list(dev.ALL_KINDS)

TRACE_COLUMNS = ("submit_us", "complete_us", "op", "zone", "lba", "nblocks",
                 "status", "latency_us")


class EmptyInput(ValueError):
    pass


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: element ceil(p/100 * n) of the sorted list."""
    if not values:
        raise EmptyInput("percentile of empty input")
    if not 0 < p < 100:
        raise ValueError("p must lie in (0, 100)")
    ordered = sorted(values)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[rank - 1]


def _latency_stats(latencies) -> dict | None:
    if not latencies:
        return None
    n = len(latencies)
    return {
        "mean": sum(latencies) / n,
        "median": percentile(latencies, 50),
        "p95": percentile(latencies, 95),
        "p99": percentile(latencies, 99),
        "max": max(latencies),
    }


def build_report(trace: Trace, geometry, profile, jobspec, seed: int) -> dict:
    span_s = trace.span_us / 1e6
    per_class = {}
    buckets = {}
    n_buckets = (int(trace.last_complete_us // 1e6) + 1
                 if trace.completions else 0)
    for kind in OP_CLASSES:
        per_class[kind] = {"lat": [], "bytes": 0, "count": 0, "errors": {},
                           "zero_fill": 0}
        buckets[kind] = {"iops": [0] * n_buckets, "bytes": [0] * n_buckets}

    for c in trace.completions:
        slot = per_class[c.op]
        slot["count"] += 1
        if c.ok:
            slot["lat"].append(c.latency_us)
            nbytes = c.nblocks * geometry.block_bytes \
                if c.op in dev.IO_KINDS else 0
            slot["bytes"] += nbytes
            if c.zero_fill:
                slot["zero_fill"] += 1
            b = int(c.complete_us // 1e6)
            buckets[c.op]["iops"][b] += 1
            buckets[c.op]["bytes"][b] += nbytes
        else:
            slot["errors"][c.status] = slot["errors"].get(c.status, 0) + 1

    op_classes = {}
    for kind in OP_CLASSES:
        slot = per_class[kind]
        ok_count = len(slot["lat"])
        entry = {
            "count": slot["count"],
            "ok": ok_count,
            "errors": dict(sorted(slot["errors"].items())),
            "latency_us": _latency_stats(slot["lat"]),
            "throughput": {
                "iops": ok_count / span_s if span_s > 0 else 0.0,
                "mib_s": (slot["bytes"] / 1048576 / span_s
                          if span_s > 0 else 0.0),
            },
        }
        if kind == dev.READ:
            entry["zero_fill_count"] = slot["zero_fill"]
        op_classes[kind] = entry

    time_series = {
        kind: {
            "iops": buckets[kind]["iops"],
            "mib_s": [b / 1048576 for b in buckets[kind]["bytes"]],
        }
        for kind in OP_CLASSES
    }

    return {
        "version": REPORT_VERSION,
        "config": {
            "geometry": {
                "zone_size_blocks": geometry.zone_size_blocks,
                "zone_cap_blocks": geometry.zone_cap_blocks,
                "num_zones": geometry.num_zones,
                "block_bytes": geometry.block_bytes,
                "max_open_zones": geometry.max_open_zones,
                "max_active_zones": geometry.max_active_zones,
            },
            "profile_id": profile.name,
            "jobspec_sha256": jobspec.sha256,
            "stack": jobspec.stack.stack,
            "seed": seed,
        },
        "duration_us": trace.span_us,
        "op_classes": op_classes,
        "throughput_time_series": {"bucket_s": 1, "series": time_series},
        "merge_rate": trace.merge_rate,
        "merge_stats": {
            "absorbed": trace.merge_absorbed,
            "dispatched_commands": trace.merge_dispatched,
            "write_submissions": trace.write_submissions,
        },
        "device_final": trace.device_final,
        "totals": {
            "completions": len(trace.completions),
            "errors": sum(1 for c in trace.completions if not c.ok),
        },
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report))


def write_trace_csv(trace: Trace, path, geometry) -> None:
    """Completion-ordered CSV, ties broken by submission order."""
    rows = sorted(trace.completions, key=lambda c: (c.complete_us, c.order))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for c in rows:
            mgmt = c.op in dev.MGMT_KINDS
            writer.writerow([
                repr(c.submit_us),
                repr(c.complete_us),
                c.op,
                c.zone if c.zone >= 0 else "",
                "" if (mgmt or c.lba < 0) else c.lba,
                "" if mgmt else c.nblocks,
                c.status,
                repr(c.latency_us),
            ])
