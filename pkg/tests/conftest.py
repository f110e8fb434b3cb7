from __future__ import annotations

import pytest

from znsim.device import DeviceGeometry
from znsim.engine import run_sim
from znsim.profile import load_builtin, profile_from_dict
from znsim.report import build_report
from znsim.workload import parse_jobspec


@pytest.fixture(scope="session")
def zn540():
    return load_builtin("zn540")


@pytest.fixture
def tiny_geometry():
    """4 zones x 8 blocks with tight limits, for state-machine sweeps."""
    return DeviceGeometry(zone_size_blocks=10, zone_cap_blocks=8, num_zones=4,
                          block_bytes=4096, max_open_zones=2,
                          max_active_zones=3)


SIMPLE_PROFILE = {
    "name": "simple",
    "open_latency_us": 1.0,
    "close_latency_us": 2.0,
    "implicit_open_surcharge_us": {"write": 0.5, "append": 0.75},
    "reset_model_ms": [[0.0, 1.0], [1.0, 2.0]],
    "reset_finished_delta_ms": 0.25,
    "finish_model_ms": [[0.001, 10.0], [1.0, 5.0]],
    "reset_interference_multiplier": {"read": 2.0, "write": 3.0,
                                      "append": 4.0},
    "ceilings": {
        "bandwidth_ceiling_mib_s": 4000.0,
        "inter_zone_write_max_iops": 1000000,
        "stations": {
            "read": {"max_iops": None, "parallelism_slots": 4},
            "write": {"max_iops": 1000000, "parallelism_slots": 4},
            "append": {"max_iops": None, "parallelism_slots": 4},
        },
    },
    "jitter": {"mode": "none", "p95_over_median": {}},
    "base_latency_us": {
        "userspace-direct": {
            "write": {"4096": [[4096, 10.0], [131072, 100.0]]},
            "append": {"4096": [[4096, 15.0], [131072, 110.0]]},
            "read": {"4096": [[4096, 20.0], [131072, 120.0]]},
        },
        "kernel-merge-sched": {
            "write": {"4096": [[4096, 12.0], [131072, 102.0]]},
            "append": {"4096": [[4096, 16.0], [131072, 112.0]]},
            "read": {"4096": [[4096, 21.0], [131072, 121.0]]},
        },
    },
}


@pytest.fixture
def simple_device():
    """Small geometry plus a round-number profile for engine math tests."""
    geometry = DeviceGeometry(zone_size_blocks=64, zone_cap_blocks=48,
                              num_zones=16, block_bytes=4096,
                              max_open_zones=4, max_active_zones=6)
    return geometry, profile_from_dict(SIMPLE_PROFILE)


def run_jobs(device, jobs, stack=None, seed=3):
    geometry, profile = device
    doc = {"jobs": jobs, "seed": seed}
    if stack:
        doc["stack"] = stack
    spec = parse_jobspec(doc, geometry)
    trace = run_sim(geometry, profile, spec)
    report = build_report(trace, geometry, profile, spec, seed)
    return trace, report


def ok_lats(trace, kind):
    done = [c for c in trace.completions if c.op == kind and c.ok]
    done.sort(key=lambda c: c.order)
    return [c.latency_us for c in done]
