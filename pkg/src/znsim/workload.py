"""Declarative workload specs and deterministic op-stream generation.

A JobSpec is a JSON document: a list of jobs that run concurrently on the
shared simulated device, plus the host-stack block and a seed.  Generation
is a pure function of (job, geometry, seed): fills honor per-zone write
pointers, random reads draw uniformly over the declared extent, and
management jobs can stage each target zone to a requested occupancy before
the measured operation.

Staging is instant (it replaces the timed pre-fill the benchmarks ran) and
management jobs stage rolling, one zone per cycle, so the open/active
limits hold no matter how many zones the sweep visits.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass

from . import device as dev
from .device import DeviceGeometry
from .hoststack import StackConfig

STAGE = "stage"  # pseudo-op applied instantly at submission, never traced

WORKLOAD_OPS = dev.ALL_KINDS
PATTERNS = ("sequential", "random")


class ParseError(ValueError):
    """Structurally invalid jobspec document (carries the field path)."""


class ValidationError(ValueError):
    """Well-formed but semantically invalid jobspec."""


@dataclass
class GenOp:
    kind: str
    zone: int = -1
    lba: int = -1
    nblocks: int = 0
    nbytes: int = 0
    fraction: float = 0.0     # stage only
    delay_us: float = 0.0     # submitter waits this long before submitting
    primary: bool = True      # counts against the job's op_count


@dataclass
class Job:
    op: str
    name: str = ""
    pattern: str = "sequential"
    request_bytes: int | None = None
    queue_depth: int = 1
    num_submitters: int = 1
    zone_start: int = 0
    zone_count: int = 0
    rate_limit_mib_s: float | None = None
    duration_virtual_s: float | None = None
    op_count: int | None = None
    stage: float | None = None
    stabilize_s: float = 0.0
    read_unwritten: bool = False
    recycle_full_zones: bool = False
    finish_before_reset: bool = False

    @property
    def zones(self) -> range:
        return range(self.zone_start, self.zone_start + self.zone_count)

    @property
    def is_io(self) -> bool:
        return self.op in dev.IO_KINDS


@dataclass
class JobSpec:
    jobs: list[Job]
    stack: StackConfig
    seed: int
    sha256: str = ""


_JOB_FIELDS = {
    "name", "op", "pattern", "request_bytes", "queue_depth", "num_submitters",
    "zone_set", "rate_limit_mib_s", "duration_virtual_s", "op_count",
    "stage", "stabilize_s", "read_unwritten", "recycle_full_zones",
    "finish_before_reset",
}
_STACK_FIELDS = {"stack", "merge_window_us", "max_merge_bytes"}
_TOP_FIELDS = {"jobs", "stack", "seed"}


def parse_jobspec(doc: dict, geometry: DeviceGeometry) -> JobSpec:
    """Validate a jobspec document against the device geometry."""
    if not isinstance(doc, dict):
        raise ParseError("jobspec must be a JSON object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ParseError(f"unknown top-level field(s): {sorted(unknown)}")
    jobs_doc = doc.get("jobs")
    if not isinstance(jobs_doc, list) or not jobs_doc:
        raise ParseError("jobs: must be a non-empty list")

    stack_doc = doc.get("stack", {})
    if not isinstance(stack_doc, dict):
        raise ParseError("stack: must be an object")
    unknown = set(stack_doc) - _STACK_FIELDS
    if unknown:
        raise ParseError(f"stack: unknown field(s): {sorted(unknown)}")
    try:
        stack = StackConfig(**stack_doc)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"stack: {exc}") from None

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ParseError("seed: must be an integer")

    jobs = [_parse_job(j, i, geometry) for i, j in enumerate(jobs_doc)]
    sha = hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
    return JobSpec(jobs=jobs, stack=stack, seed=seed, sha256=sha)


def _parse_job(doc: dict, idx: int, geometry: DeviceGeometry) -> Job:
    where = f"jobs[{idx}]"
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: must be an object")
    unknown = set(doc) - _JOB_FIELDS
    if unknown:
        raise ParseError(f"{where}: unknown field(s): {sorted(unknown)}")

    op = doc.get("op")
    if op not in WORKLOAD_OPS:
        raise ParseError(f"{where}.op: must be one of {WORKLOAD_OPS}")
    pattern = doc.get("pattern", "sequential")
    if pattern not in PATTERNS:
        raise ParseError(f"{where}.pattern: must be one of {PATTERNS}")

    zone_set = doc.get("zone_set", geometry.num_zones)
    if isinstance(zone_set, bool) or not isinstance(zone_set, (int, dict)):
        raise ParseError(f"{where}.zone_set: int count or "
                         "{{'start':..,'count':..}}")
    if isinstance(zone_set, int):
        start, count = 0, zone_set
    else:
        extra = set(zone_set) - {"start", "count"}
        if extra:
            raise ParseError(f"{where}.zone_set: unknown field(s) {extra}")
        start = zone_set.get("start", 0)
        count = zone_set.get("count")
        if count is None:
            raise ParseError(f"{where}.zone_set: count is required")
        if not isinstance(start, int) or not isinstance(count, int):
            raise ParseError(f"{where}.zone_set: start/count must be ints")
    if count < 1:
        raise ValidationError(f"{where}.zone_set: needs at least one zone")
    if start < 0 or start + count > geometry.num_zones:
        raise ValidationError(
            f"{where}.zone_set: zones [{start}, {start + count}) outside the "
            f"{geometry.num_zones}-zone device")

    job = Job(
        op=op,
        name=doc.get("name") or f"job{idx}",
        pattern=pattern,
        request_bytes=doc.get("request_bytes"),
        queue_depth=doc.get("queue_depth", 1),
        num_submitters=doc.get("num_submitters", 1),
        zone_start=start,
        zone_count=count,
        rate_limit_mib_s=doc.get("rate_limit_mib_s"),
        duration_virtual_s=doc.get("duration_virtual_s"),
        op_count=doc.get("op_count"),
        stage=doc.get("stage"),
        stabilize_s=doc.get("stabilize_s", 0.0),
        read_unwritten=doc.get("read_unwritten", False),
        recycle_full_zones=doc.get("recycle_full_zones", False),
        finish_before_reset=doc.get("finish_before_reset", False),
    )
    if (not job.is_io and job.op_count is None
            and job.duration_virtual_s is None):
        job.op_count = count  # management default: one pass over the zones
    _validate_job(job, where, geometry)
    return job


def _validate_job(job: Job, where: str, geometry: DeviceGeometry) -> None:
    if job.queue_depth < 1:
        raise ValidationError(f"{where}.queue_depth: must be >= 1")
    if job.num_submitters < 1:
        raise ValidationError(f"{where}.num_submitters: must be >= 1")
    if job.is_io:
        rb = job.request_bytes
        if rb is None:
            raise ValidationError(f"{where}.request_bytes: required for I/O")
        if rb < geometry.block_bytes or rb % geometry.block_bytes != 0:
            raise ValidationError(
                f"{where}.request_bytes: must be a positive multiple of the "
                f"{geometry.block_bytes} B block size")
        if job.duration_virtual_s is None and job.op_count is None:
            raise ValidationError(
                f"{where}: I/O jobs need duration_virtual_s or op_count")
    if job.op_count is not None and job.op_count < 1:
        raise ValidationError(f"{where}.op_count: must be >= 1")
    if job.duration_virtual_s is not None and job.duration_virtual_s <= 0:
        raise ValidationError(f"{where}.duration_virtual_s: must be > 0")
    if job.rate_limit_mib_s is not None and job.rate_limit_mib_s <= 0:
        raise ValidationError(f"{where}.rate_limit_mib_s: must be > 0")
    if job.stage is not None and not 0.0 <= job.stage <= 1.0:
        raise ValidationError(f"{where}.stage: must be within [0, 1]")
    if job.stabilize_s < 0:
        raise ValidationError(f"{where}.stabilize_s: must be >= 0")
    if job.finish_before_reset and job.op != dev.RESET:
        raise ValidationError(
            f"{where}.finish_before_reset: only valid with op=reset")
    if job.recycle_full_zones and job.op not in (dev.WRITE, dev.APPEND):
        raise ValidationError(
            f"{where}.recycle_full_zones: only valid for write/append")
    if job.op == dev.READ and not job.read_unwritten and job.stage is None:
        raise ValidationError(
            f"{where}: reads target the written extent; stage the zones or "
            "set read_unwritten")
    if job.op == dev.READ and job.stage is not None:
        staged = round(job.stage * geometry.zone_cap_blocks)
        if staged * geometry.block_bytes < (job.request_bytes or 0):
            raise ValidationError(
                f"{where}: staged extent smaller than one read request")
    if job.op != dev.READ and job.num_submitters > job.zone_count:
        raise ValidationError(
            f"{where}: num_submitters exceeds zone_set size (each submitter "
            "owns a zone partition)")


def load_jobspec(path, geometry: DeviceGeometry) -> JobSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from None
    return parse_jobspec(doc, geometry)


# -- op-stream generation -------------------------------------------------------


def submitter_zones(job: Job, submitter_idx: int) -> list[int]:
    """Round-robin zone partition for one submitter.  Read jobs share the
    whole zone set instead (reads have no per-zone write pointer to race)."""
    zones = list(job.zones)
    if job.op == dev.READ:
        return zones
    return zones[submitter_idx::job.num_submitters]


def generate(job: Job, geometry: DeviceGeometry, rng: random.Random,
             zones: list[int] | None = None):
    """Yield the deterministic GenOp stream for one submitter.

    zones defaults to the whole job zone set; the engine passes each
    submitter's partition.  Streams for duration-bound jobs are endless,
    the engine stops pulling at the deadline.
    """
    if zones is None:
        zones = list(job.zones)
    if job.op in (dev.WRITE, dev.APPEND):
        yield from _gen_fill(job, geometry, rng, zones)
    elif job.op == dev.READ:
        yield from _gen_read(job, geometry, rng, zones)
    else:
        yield from _gen_management(job, geometry, zones)


def _staged_wp(job: Job, geometry: DeviceGeometry) -> int:
    if job.stage is None:
        return 0
    return round(job.stage * geometry.zone_cap_blocks)


def _gen_fill(job: Job, geometry: DeviceGeometry, rng: random.Random,
              zones: list[int]):
    nb = job.request_bytes // geometry.block_bytes
    nbytes = job.request_bytes
    cap = geometry.zone_cap_blocks
    wp = {z: _staged_wp(job, geometry) for z in zones}

    def emit(zone: int):
        if job.op == dev.WRITE:
            op = GenOp(dev.WRITE, zone=zone,
                       lba=geometry.zslba(zone) + wp[zone],
                       nblocks=nb, nbytes=nbytes)
        else:
            op = GenOp(dev.APPEND, zone=zone, nblocks=nb, nbytes=nbytes)
        wp[zone] += nb
        return op

    if job.pattern == "sequential":
        for zone in zones:
            while wp[zone] + nb <= cap:
                yield emit(zone)
        if not job.recycle_full_zones:
            return
        while True:  # endless rotation: reset each zone and keep filling
            for zone in zones:
                yield GenOp(dev.RESET, zone=zone, primary=False)
                wp[zone] = 0
                while wp[zone] + nb <= cap:
                    yield emit(zone)

    while True:
        zone = zones[rng.randrange(len(zones))]
        if wp[zone] + nb > cap:
            if job.recycle_full_zones:
                yield GenOp(dev.RESET, zone=zone, primary=False)
                wp[zone] = 0
            else:
                open_zones = [z for z in zones if wp[z] + nb <= cap]
                if not open_zones:
                    return
                zone = open_zones[rng.randrange(len(open_zones))]
        yield emit(zone)


def _gen_read(job: Job, geometry: DeviceGeometry, rng: random.Random,
              zones: list[int]):
    nb = job.request_bytes // geometry.block_bytes
    nbytes = job.request_bytes
    # extent per zone: the staged prefix, or full capacity with read_unwritten
    hi = _staged_wp(job, geometry) if job.stage is not None \
        else geometry.zone_cap_blocks
    if job.pattern == "random":
        while True:
            zone = zones[rng.randrange(len(zones))]
            off = rng.randrange(0, hi - nb + 1)
            yield GenOp(dev.READ, zone=zone, lba=geometry.zslba(zone) + off,
                        nblocks=nb, nbytes=nbytes)
    else:
        for zone in itertools.cycle(zones):
            off = 0
            while off + nb <= hi:
                yield GenOp(dev.READ, zone=zone,
                            lba=geometry.zslba(zone) + off,
                            nblocks=nb, nbytes=nbytes)
                off += nb


def _gen_management(job: Job, geometry: DeviceGeometry, zones: list[int]):
    delay = job.stabilize_s * 1e6
    # only reset cycles return the zone to a re-stageable state
    passes = itertools.cycle([zones]) if job.op == dev.RESET else [zones]
    for group in passes:
        for zone in group:
            wait = 0.0
            if job.stage is not None:
                yield GenOp(STAGE, zone=zone, fraction=job.stage,
                            primary=False)
                wait = delay
            if job.finish_before_reset:
                yield GenOp(dev.FINISH, zone=zone, delay_us=wait,
                            primary=False)
                wait = 0.0
            yield GenOp(job.op, zone=zone, delay_us=wait)


class TokenBucket:
    """Byte token bucket with a one-request burst: shapes long-run
    throughput to the configured rate by pacing submission times."""

    def __init__(self, rate_mib_s: float):
        if rate_mib_s <= 0:
            raise ValueError("rate must be positive")
        self.bytes_per_us = rate_mib_s * 1048576 / 1e6
        self.vt = 0.0

    def next_time(self, nbytes: int, now: float) -> float:
        """Earliest time the request may be submitted; consumes tokens."""
        if nbytes <= 0:
            return now
        start = max(now, self.vt)
        self.vt = start + nbytes / self.bytes_per_us
        return start
