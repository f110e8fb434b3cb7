"""Host-side I/O path emulation.

Three stacks are modeled: a userspace pass-through path, a kernel path
without a scheduler, and a kernel path with a deadline-style scheduler
that coalesces contiguous writes to the same zone into larger device
commands.  The stack choice itself carries no additive cost here; it
selects the stack dimension of the profile's base-latency table.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .profile import STACKS, KERNEL_MERGE_SCHED


@dataclass(frozen=True)
class StackConfig:
    stack: str = "userspace-direct"
    merge_window_us: float = 20.0
    max_merge_bytes: int = 131072

    def __post_init__(self) -> None:
        if self.stack not in STACKS:
            raise ValueError(f"unknown host stack {self.stack!r}")
        if self.merge_window_us < 0:
            raise ValueError("merge_window_us must be >= 0")
        if self.max_merge_bytes <= 0:
            raise ValueError("max_merge_bytes must be positive")

    @property
    def merging(self) -> bool:
        return self.stack == KERNEL_MERGE_SCHED


def stack_tax(stack: str) -> str:
    """The stack's cost is embedded in the base-latency table, not added
    on top; this simply names the table dimension to use."""
    if stack not in STACKS:
        raise ValueError(f"unknown host stack {stack!r}")
    return stack


@dataclass
class MergeUnit:
    """One device-bound write built from one or more host submissions."""

    zone: int
    lba: int
    nblocks: int
    nbytes: int
    first_submit_us: float
    implicit_open: bool
    constituents: list = field(default_factory=list)

    @property
    def end_lba(self) -> int:
        return self.lba + self.nblocks


class MergeScheduler:
    """Deadline-style write coalescing, one FIFO of merge units per zone.

    A new submission back-merges into the youngest queued unit when it is
    LBA-contiguous, lands within the merge window of that unit's first
    submission, and does not push the unit past max_merge_bytes.  Units
    leave the queue only when the device can actually start them, so
    everything that queues up behind a busy zone keeps merging.
    """

    def __init__(self, config: StackConfig, block_bytes: int):
        self.window_us = config.merge_window_us
        self.max_bytes = config.max_merge_bytes
        self.block_bytes = block_bytes
        self.pending: dict[int, deque[MergeUnit]] = {}
        self.absorbed = 0
        self.dispatched = 0
        self._rr: int = -1  # last dispatched zone, for round-robin fairness

    def insert(self, sub, now: float) -> None:
        """sub carries zone, lba, nblocks, nbytes, implicit_open."""
        queue = self.pending.get(sub.zone)
        if queue is None:
            queue = deque()
            self.pending[sub.zone] = queue
        if queue:
            tail = queue[-1]
            if (tail.end_lba == sub.lba
                    and tail.nbytes + sub.nbytes <= self.max_bytes
                    and now - tail.first_submit_us <= self.window_us):
                tail.nblocks += sub.nblocks
                tail.nbytes += sub.nbytes
                tail.implicit_open = tail.implicit_open or sub.implicit_open
                tail.constituents.append(sub)
                self.absorbed += 1
                return
        unit = MergeUnit(zone=sub.zone, lba=sub.lba, nblocks=sub.nblocks,
                         nbytes=sub.nbytes, first_submit_us=now,
                         implicit_open=sub.implicit_open,
                         constituents=[sub])
        queue.append(unit)

    def next_ready_zone(self, gated_zones) -> int | None:
        """Lowest zone after the last dispatched one (wrapping) that has
        pending work and no write in flight."""
        zones = sorted(z for z, q in self.pending.items() if q)
        if not zones:
            return None
        after = [z for z in zones if z > self._rr]
        for z in after + zones:
            if z not in gated_zones:
                return z
        return None

    def head_unit(self, zone: int) -> MergeUnit:
        return self.pending[zone][0]

    def pop_unit(self, zone: int) -> MergeUnit:
        unit = self.pending[zone].popleft()
        if not self.pending[zone]:
            del self.pending[zone]
        self.dispatched += 1
        self._rr = zone
        return unit
