"""Deterministic discrete-event core.

Commands are admitted against the device state the instant they are
submitted; what this module adds is time.  Service is modeled as
bounded-parallelism stations per op class (read / write / append /
management), per-class start pacing that realizes the measured IOPS
ceilings, a device-wide byte pacer over the write path that realizes the
bandwidth ceiling, and a per-zone gate that keeps at most one write in
flight per zone.  Merged scheduler writes ride the write station as single
commands and fan their completion out to every constituent submission.

Determinism: the event heap orders by (time, phase, submitter, sequence),
completions drain before submissions at equal times, and stations are
pumped in a fixed order with management last, so a reset starting at time
t sees exactly the I/O in service at t.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass

from . import device as dev
from . import workload as wl
from .device import ZnsDevice, DeviceGeometry
from .hoststack import MergeScheduler
from .profile import DeviceProfile

PHASE_COMPLETE = 0
PHASE_SUBMIT = 1
PHASE_WAKE = 2

_MGMT = "management"


class ConfigError(ValueError):
    """Inconsistent run inputs (job/profile/geometry mismatch)."""


@dataclass
class Completion:
    op: str
    zone: int
    lba: int
    nblocks: int
    status: str
    submit_us: float
    complete_us: float
    job: str
    submitter: int
    order: int           # global submission order, for tie-breaking
    zero_fill: bool = False

    @property
    def ok(self) -> bool:
        return self.status == dev.OK

    @property
    def latency_us(self) -> float:
        return self.complete_us - self.submit_us


@dataclass
class Trace:
    completions: list
    first_submit_us: float
    last_complete_us: float
    merge_absorbed: int
    merge_dispatched: int
    write_submissions: int
    device_final: dict

    @property
    def span_us(self) -> float:
        return max(self.last_complete_us - self.first_submit_us, 0.0)

    @property
    def merge_rate(self) -> float:
        if self.write_submissions == 0:
            return 0.0
        return self.merge_absorbed / self.write_submissions


class _Cmd:
    __slots__ = ("kind", "zone", "lba", "nblocks", "nbytes", "submit_us",
                 "submitter", "order", "adm", "job")

    def __init__(self, kind, zone, lba, nblocks, nbytes, submit_us,
                 submitter, order, adm, job):
        self.kind = kind
        self.zone = zone
        self.lba = lba
        self.nblocks = nblocks
        self.nbytes = nbytes
        self.submit_us = submit_us
        self.submitter = submitter
        self.order = order
        self.adm = adm
        self.job = job

    @property
    def implicit_open(self) -> bool:
        return self.adm.implicit_open


class _Station:
    __slots__ = ("name", "slots", "interval_us", "busy", "queue",
                 "pace_vt", "wake_at")

    def __init__(self, name: str, slots: int, max_iops: float | None):
        self.name = name
        self.slots = slots
        self.interval_us = 1e6 / max_iops if max_iops else 0.0
        self.busy = 0
        self.queue = []
        self.pace_vt = 0.0
        self.wake_at = math.inf


class _JobRuntime:
    __slots__ = ("job", "index", "bucket", "duration_end_us",
                 "remaining_primary")

    def __init__(self, job: wl.Job, index: int):
        self.job = job
        self.index = index
        self.bucket = (wl.TokenBucket(job.rate_limit_mib_s)
                       if job.rate_limit_mib_s else None)
        self.duration_end_us = (job.duration_virtual_s * 1e6
                                if job.duration_virtual_s else None)
        self.remaining_primary = job.op_count


class _Submitter:
    __slots__ = ("gid", "jr", "stream", "pending", "inflight", "halted",
                 "seq", "done", "last_submit_us")

    def __init__(self, gid: int, jr: _JobRuntime, stream):
        self.gid = gid
        self.jr = jr
        self.stream = stream
        self.pending = None
        self.inflight = 0
        self.halted = False
        self.seq = 0
        self.done = False
        self.last_submit_us = 0.0

    def peek(self):
        if self.pending is None and not self.done:
            self.pending = next(self.stream, None)
            if self.pending is None:
                self.done = True
        return self.pending

    def consume(self):
        op = self.pending
        self.pending = None
        return op


class Simulator:
    """One run: geometry + profile + jobspec + seed -> Trace."""

    def __init__(self, geometry: DeviceGeometry, profile: DeviceProfile,
                 jobspec: wl.JobSpec, seed: int | None = None):
        self.geometry = geometry
        self.profile = profile
        self.jobspec = jobspec
        self.seed = jobspec.seed if seed is None else seed
        self.stack = jobspec.stack
        self._validate_inputs()

        self.device = ZnsDevice(geometry)
        self._jitter_rng = random.Random(self.seed * 0x9E3779B1 + 0x7F4A7C15)

        ceil = profile.ceilings
        self._bucket_rate = ceil.bandwidth_ceiling_mib_s * 1048576 / 1e6
        self._bucket_vt = 0.0
        self.stations = {}
        for kind in dev.IO_KINDS:
            spec = ceil.stations.get(kind)
            if spec is None:
                self.stations[kind] = _Station(kind, 1 << 30, None)
            else:
                self.stations[kind] = _Station(kind, spec.parallelism_slots,
                                               spec.max_iops)
        self.stations[_MGMT] = _Station(_MGMT, 1, None)

        self.scheduler = (MergeScheduler(jobspec.stack, geometry.block_bytes)
                          if jobspec.stack.merging else None)
        self.write_gates: set[int] = set()
        self._inflight_io = {dev.READ: 0, dev.WRITE: 0, dev.APPEND: 0}

        self.completions: list[Completion] = []
        self._heap: list = []
        self._order = 0          # global submission counter
        self._wake_seq = 0
        self.first_submit_us = math.inf
        self.last_complete_us = 0.0
        self.write_submissions = 0

        self._build_submitters()

    # -- setup ----------------------------------------------------------------

    def _validate_inputs(self) -> None:
        fmt = self.geometry.block_bytes
        stack = self.stack.stack
        for job in self.jobspec.jobs:
            if job.is_io and not self.profile.has_base_latency(job.op, fmt,
                                                               stack):
                raise ConfigError(
                    f"profile {self.profile.name!r} has no base latency for "
                    f"({job.op}, {stack}, {fmt} B format)")

    def _build_submitters(self) -> None:
        self.submitters: list[_Submitter] = []
        gid = 0
        for index, job in enumerate(self.jobspec.jobs):
            jr = _JobRuntime(job, index)
            job_rng = random.Random(self.seed * 1000003 + index + 1)
            # bulk staging for I/O jobs replaces a timed pre-fill
            if job.is_io and job.stage is not None:
                for zone in job.zones:
                    try:
                        self.device.stage_occupancy(zone, job.stage)
                    except dev.StagingError as exc:
                        raise ConfigError(str(exc)) from None
            for sub_idx in range(job.num_submitters):
                zones = wl.submitter_zones(job, sub_idx)
                sub_rng = random.Random(job_rng.getrandbits(63))
                stream = wl.generate(job, self.geometry, sub_rng, zones)
                self.submitters.append(_Submitter(gid, jr, stream))
                gid += 1

    # -- event plumbing ---------------------------------------------------------

    def _push(self, time_us: float, phase: int, a: int, b: int, payload):
        heapq.heappush(self._heap, (time_us, phase, a, b, payload))

    def _schedule_wake(self, st: _Station, when: float) -> None:
        if when < st.wake_at:
            st.wake_at = when
            self._wake_seq += 1
            self._push(when, PHASE_WAKE, 0, self._wake_seq, st)

    def _try_fill(self, sub: _Submitter, now: float) -> None:
        jr = sub.jr
        job = jr.job
        while not sub.halted and sub.inflight < job.queue_depth:
            if (jr.remaining_primary is not None
                    and jr.remaining_primary <= 0):
                sub.done = True
                sub.pending = None
                return
            op = sub.peek()
            if op is None:
                return
            # per-submitter submissions never reorder
            submit_at = max(now + op.delay_us, sub.last_submit_us)
            if jr.bucket is not None and op.nbytes:
                submit_at = jr.bucket.next_time(op.nbytes, submit_at)
            if (jr.duration_end_us is not None
                    and submit_at >= jr.duration_end_us):
                sub.done = True
                sub.pending = None
                return
            sub.consume()
            sub.last_submit_us = submit_at
            if op.primary and jr.remaining_primary is not None:
                jr.remaining_primary -= 1
            sub.inflight += 1
            sub.seq += 1
            self._push(submit_at, PHASE_SUBMIT, sub.gid, sub.seq, (sub, op))

    # -- submission & admission ---------------------------------------------------

    def _process_submit(self, now: float, sub: _Submitter, op: wl.GenOp) -> None:
        if op.kind == wl.STAGE:
            try:
                self.device.stage_occupancy(op.zone, op.fraction)
            except dev.StagingError as exc:
                # the real fill this replaces would have been refused
                # admission: charge the error to the job and halt its stream
                self.first_submit_us = min(self.first_submit_us, now)
                self._order += 1
                self._record(Completion(
                    sub.jr.job.op, op.zone, -1, 0, exc.code, now, now,
                    sub.jr.job.name, sub.gid, self._order))
                sub.inflight -= 1
                sub.halted = True
                return
            sub.inflight -= 1
            self._try_fill(sub, now)
            return

        self.first_submit_us = min(self.first_submit_us, now)
        self._order += 1
        order = self._order

        if op.kind == dev.WRITE:
            adm = self.device.submit_write(op.zone, op.lba, op.nblocks)
        elif op.kind == dev.APPEND:
            adm = self.device.submit_append(op.zone, op.nblocks)
        elif op.kind == dev.READ:
            adm = self.device.submit_read(op.lba, op.nblocks)
        else:
            adm = self.device.zone_manage(op.zone, op.kind)

        if not adm.ok:
            # rejected instantly; abort this submitter's stream
            self._record(Completion(
                op.kind, op.zone, op.lba if op.lba >= 0 else -1, op.nblocks,
                adm.status, now, now, sub.jr.job.name, sub.gid, order))
            sub.inflight -= 1
            sub.halted = True
            return

        lba = adm.assigned_lba if op.kind == dev.APPEND else op.lba
        cmd = _Cmd(op.kind, op.zone, lba, op.nblocks, op.nbytes, now,
                   sub, order, adm, sub.jr.job.name)
        if op.kind == dev.WRITE:
            self.write_submissions += 1
            if self.scheduler is not None:
                self.scheduler.insert(cmd, now)
                return
        if op.kind in dev.MGMT_KINDS:
            self.stations[_MGMT].queue.append(cmd)
        else:
            self.stations[op.kind].queue.append(cmd)

    # -- service ---------------------------------------------------------------

    def _io_service_us(self, kind: str, nbytes: int, implicit_open: bool) -> float:
        base = self.profile.base_latency(kind, nbytes,
                                         self.geometry.block_bytes,
                                         self.stack.stack)
        if implicit_open:
            base += self.profile.implicit_open_surcharge(kind)
        # resets never slow I/O down; the factor is identically 1.0
        base *= self.profile.io_interference_factor()
        return self.profile.sample_latency(base, kind, self._jitter_rng)

    def _mgmt_service_us(self, cmd: _Cmd) -> float:
        adm = cmd.adm
        if cmd.kind == dev.OPEN:
            base = self.profile.open_latency_us
        elif cmd.kind == dev.CLOSE:
            base = self.profile.close_latency_us
        elif cmd.kind == dev.FINISH:
            base = self.profile.finish_latency_ms(adm.occupancy_before) * 1e3
        else:  # reset: concurrent I/O in service inflates it
            kinds = {k for k, n in self._inflight_io.items() if n > 0}
            factor = self.profile.reset_interference_factor(kinds)
            base = self.profile.reset_latency_ms(
                adm.occupancy_before, adm.finished_before) * factor * 1e3
        return self.profile.sample_latency(base, cmd.kind, self._jitter_rng)

    def _start(self, st: _Station, payload, kind: str, nbytes: int,
               service_us: float, now: float, order_key) -> None:
        st.busy += 1
        if st.interval_us:
            st.pace_vt = max(st.pace_vt, now) + st.interval_us
        if kind in (dev.WRITE, dev.APPEND):
            self._bucket_vt = max(self._bucket_vt, now) + \
                nbytes / self._bucket_rate
        if kind in self._inflight_io:
            self._inflight_io[kind] += 1
        self._push(now + service_us, PHASE_COMPLETE, order_key[0],
                   order_key[1], (st, kind, payload))

    # -- pumping ---------------------------------------------------------------

    def _pump(self, now: float) -> None:
        if self.scheduler is not None:
            self._pump_write_merged(now)
        else:
            self._pump_write_plain(now)
        self._pump_fifo(self.stations[dev.APPEND], dev.APPEND, now)
        self._pump_fifo(self.stations[dev.READ], dev.READ, now)
        self._pump_mgmt(now)

    def _earliest_start(self, st: _Station, now: float, nbytes: int,
                        uses_bucket: bool) -> float:
        t = max(now, st.pace_vt)
        if uses_bucket and nbytes:
            t = max(t, self._bucket_vt)
        return t

    def _pump_fifo(self, st: _Station, kind: str, now: float) -> None:
        uses_bucket = kind == dev.APPEND
        while st.queue and st.busy < st.slots:
            cmd = st.queue[0]
            start = self._earliest_start(st, now, cmd.nbytes, uses_bucket)
            if start > now:
                self._schedule_wake(st, start)
                return
            st.queue.pop(0)
            service = self._io_service_us(kind, cmd.nbytes,
                                          cmd.adm.implicit_open)
            self._start(st, cmd, kind, cmd.nbytes, service, now,
                        (cmd.submitter.gid, cmd.order))

    def _pump_write_plain(self, now: float) -> None:
        st = self.stations[dev.WRITE]
        while st.queue and st.busy < st.slots:
            picked = None
            for idx, cmd in enumerate(st.queue):
                if cmd.zone not in self.write_gates:
                    picked = idx
                    break
            if picked is None:
                return
            cmd = st.queue[picked]
            start = self._earliest_start(st, now, cmd.nbytes, True)
            if start > now:
                self._schedule_wake(st, start)
                return
            st.queue.pop(picked)
            self.write_gates.add(cmd.zone)
            service = self._io_service_us(dev.WRITE, cmd.nbytes,
                                          cmd.adm.implicit_open)
            self._start(st, cmd, dev.WRITE, cmd.nbytes, service, now,
                        (cmd.submitter.gid, cmd.order))

    def _pump_write_merged(self, now: float) -> None:
        st = self.stations[dev.WRITE]
        while st.busy < st.slots:
            zone = self.scheduler.next_ready_zone(self.write_gates)
            if zone is None:
                return
            unit = self.scheduler.head_unit(zone)
            start = self._earliest_start(st, now, unit.nbytes, True)
            if start > now:
                self._schedule_wake(st, start)
                return
            self.scheduler.pop_unit(zone)
            self.write_gates.add(zone)
            service = self._io_service_us(dev.WRITE, unit.nbytes,
                                          unit.implicit_open)
            head = unit.constituents[0]
            self._start(st, unit, dev.WRITE, unit.nbytes, service, now,
                        (head.submitter.gid, head.order))

    def _pump_mgmt(self, now: float) -> None:
        st = self.stations[_MGMT]
        while st.queue and st.busy < st.slots:
            cmd = st.queue.pop(0)
            service = self._mgmt_service_us(cmd)
            self._start(st, cmd, cmd.kind, 0, service, now,
                        (cmd.submitter.gid, cmd.order))

    # -- completion --------------------------------------------------------------

    def _record(self, completion: Completion) -> None:
        self.completions.append(completion)
        self.last_complete_us = max(self.last_complete_us,
                                    completion.complete_us)

    def _process_complete(self, now: float, st: _Station, kind: str,
                          payload) -> None:
        st.busy -= 1
        if kind in self._inflight_io:
            self._inflight_io[kind] -= 1
        if isinstance(payload, _Cmd):
            cmds = (payload,)
            if kind == dev.WRITE:
                self.write_gates.discard(payload.zone)
        else:  # merged unit
            cmds = tuple(payload.constituents)
            self.write_gates.discard(payload.zone)
        touched = []
        for cmd in cmds:
            self._record(Completion(
                cmd.kind, cmd.zone, cmd.lba, cmd.nblocks, dev.OK,
                cmd.submit_us, now, cmd.job, cmd.submitter.gid, cmd.order,
                zero_fill=cmd.adm.zero_fill))
            cmd.submitter.inflight -= 1
            touched.append(cmd.submitter)
        for sub in touched:
            self._try_fill(sub, now)

    # -- main loop ---------------------------------------------------------------

    def run(self) -> Trace:
        for sub in self.submitters:
            self._try_fill(sub, 0.0)
        heap = self._heap
        while heap:
            t = heap[0][0]
            while heap and heap[0][0] == t:
                _, phase, _, _, payload = heapq.heappop(heap)
                if phase == PHASE_COMPLETE:
                    st, kind, cmd = payload
                    self._process_complete(t, st, kind, cmd)
                elif phase == PHASE_SUBMIT:
                    sub, op = payload
                    self._process_submit(t, sub, op)
                else:
                    payload.wake_at = math.inf
            self._pump(t)
        first = self.first_submit_us if self.completions else 0.0
        return Trace(
            completions=self.completions,
            first_submit_us=first,
            last_complete_us=self.last_complete_us,
            merge_absorbed=self.scheduler.absorbed if self.scheduler else 0,
            merge_dispatched=(self.scheduler.dispatched
                              if self.scheduler else 0),
            write_submissions=self.write_submissions,
            device_final=self.device.device_report(),
        )


def run_sim(geometry: DeviceGeometry, profile: DeviceProfile,
            jobspec: wl.JobSpec, seed: int | None = None) -> Trace:
    return Simulator(geometry, profile, jobspec, seed=seed).run()
