from __future__ import annotations

import csv
import json
import math
import random

import pytest

from conftest import run_jobs
from znsim.report import (EmptyInput, TRACE_COLUMNS, build_report, percentile,
                          report_json, write_trace_csv)


class TestPercentile:
    def test_uniform_grid(self):
        assert percentile(list(range(1, 101)), 95) == 95
        assert percentile(list(range(1, 101)), 50) == 50

    def test_single_element(self):
        assert percentile([42.0], 95) == 42.0
        assert percentile([42.0], 1) == 42.0

    def test_matches_sort_oracle_on_lognormal_samples(self):
        rng = random.Random(0)
        xs = [math.exp(rng.gauss(0, 0.5)) for _ in range(10 ** 4)]
        for p in (5, 50, 90, 95, 99, 99.9):
            ordered = sorted(xs)  # independent sort + nearest-rank index
            want = ordered[math.ceil(p / 100 * len(xs)) - 1]
            assert percentile(xs, p) == want

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            percentile([], 95)

    def test_p_range(self):
        with pytest.raises(ValueError):
            percentile([1.0], 0)
        with pytest.raises(ValueError):
            percentile([1.0], 100)


class TestReport:
    @pytest.fixture
    def mixed_run(self, simple_device):
        jobs = [
            {"op": "write", "request_bytes": 4096, "queue_depth": 2,
             "zone_set": 2, "op_count": 50},
            {"op": "read", "request_bytes": 4096, "pattern": "random",
             "queue_depth": 1, "zone_set": {"start": 8, "count": 2},
             "read_unwritten": True, "op_count": 30},
            {"op": "reset", "zone_set": {"start": 12, "count": 3},
             "stage": 1.0},
        ]
        return run_jobs(simple_device, jobs)

    def test_schema_and_units_in_key_names(self, mixed_run):
        _, report = mixed_run
        assert report["version"] == 1
        assert set(report["op_classes"]) == {
            "write", "append", "read", "open", "close", "finish", "reset"}
        write = report["op_classes"]["write"]
        assert {"count", "ok", "errors", "latency_us", "throughput"} <= \
            set(write)
        assert {"iops", "mib_s"} == set(write["throughput"])
        assert "zero_fill_count" in report["op_classes"]["read"]
        assert "zero_fill_count" not in write
        assert report["throughput_time_series"]["bucket_s"] == 1

    def test_counts_reconcile_with_trace(self, mixed_run):
        trace, report = mixed_run
        total = sum(cls["count"] for cls in report["op_classes"].values())
        assert total == len(trace.completions) == \
            report["totals"]["completions"]

    def test_percentiles_non_decreasing(self, mixed_run):
        _, report = mixed_run
        for cls in report["op_classes"].values():
            stats = cls["latency_us"]
            if stats is None:
                continue
            assert stats["median"] <= stats["p95"] <= stats["p99"] \
                <= stats["max"]

    def test_zero_fill_counted(self, mixed_run):
        _, report = mixed_run
        assert report["op_classes"]["read"]["zero_fill_count"] == 30

    def test_device_final_counts_sum(self, mixed_run, simple_device):
        geometry, _ = simple_device
        _, report = mixed_run
        counts = report["device_final"]["state_counts"]
        assert sum(counts.values()) == geometry.num_zones

    def test_report_serialization_stable(self, mixed_run, simple_device):
        trace, report = mixed_run
        again, report2 = run_jobs(simple_device, [
            {"op": "write", "request_bytes": 4096, "queue_depth": 2,
             "zone_set": 2, "op_count": 50},
            {"op": "read", "request_bytes": 4096, "pattern": "random",
             "queue_depth": 1, "zone_set": {"start": 8, "count": 2},
             "read_unwritten": True, "op_count": 30},
            {"op": "reset", "zone_set": {"start": 12, "count": 3},
             "stage": 1.0},
        ])
        assert report_json(report) == report_json(report2)


class TestTraceCsv:
    def test_columns_and_ordering(self, simple_device, tmp_path):
        jobs = [
            {"op": "write", "request_bytes": 4096, "queue_depth": 4,
             "zone_set": 1, "op_count": 24},
            {"op": "reset", "zone_set": {"start": 4, "count": 2},
             "stage": 0.5},
        ]
        trace, _ = run_jobs(simple_device, jobs)
        path = tmp_path / "trace.csv"
        geometry, _ = simple_device
        write_trace_csv(trace, path, geometry)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(TRACE_COLUMNS)
        body = rows[1:]
        assert len(body) == len(trace.completions)
        times = [float(r[1]) for r in body]
        assert times == sorted(times)
        resets = [r for r in body if r[2] == "reset"]
        assert resets and all(r[4] == "" and r[5] == "" for r in resets)
        writes = [r for r in body if r[2] == "write"]
        assert all(r[4] != "" and r[5] == "1" for r in writes)
        for r in body:
            assert float(r[7]) == pytest.approx(
                float(r[1]) - float(r[0]), rel=1e-12)
