"""Functional model of a zoned namespace: zone lifecycle, write pointers,
command admission and open/active resource accounting.

This module knows nothing about time.  Every submit_* call mutates device
state immediately and returns an Admission describing what happened; the
simulation engine layers service times on top of these admissions.
"""

from __future__ import annotations

from dataclasses import dataclass

# Zone lifecycle states
EMPTY = "empty"
IMPLICIT_OPEN = "implicit_open"
EXPLICIT_OPEN = "explicit_open"
CLOSED = "closed"
FULL = "full"

ZONE_STATES = (EMPTY, IMPLICIT_OPEN, EXPLICIT_OPEN, CLOSED, FULL)
OPEN_STATES = (IMPLICIT_OPEN, EXPLICIT_OPEN)
ACTIVE_STATES = (IMPLICIT_OPEN, EXPLICIT_OPEN, CLOSED)

# Command kinds
WRITE = "write"
APPEND = "append"
READ = "read"
OPEN = "open"
CLOSE = "close"
FINISH = "finish"
RESET = "reset"

IO_KINDS = (WRITE, APPEND, READ)
MGMT_KINDS = (OPEN, CLOSE, FINISH, RESET)
ALL_KINDS = IO_KINDS + MGMT_KINDS

# Admission status codes
OK = "ok"
UNALIGNED_WRITE = "unaligned_write"
ZONE_FULL = "zone_full"
TOO_MANY_ACTIVE = "too_many_active_zones"
TOO_MANY_OPEN = "too_many_open_zones"
BOUNDS_EXCEEDED = "bounds_exceeded"
INVALID_TRANSITION = "invalid_transition"

ERROR_CODES = (
    UNALIGNED_WRITE,
    ZONE_FULL,
    TOO_MANY_ACTIVE,
    TOO_MANY_OPEN,
    BOUNDS_EXCEEDED,
    INVALID_TRANSITION,
)


class GeometryError(ValueError):
    pass


class StagingError(RuntimeError):
    """Instant staging could not be applied; carries the admission code the
    equivalent real fill would have been refused with."""

    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class DeviceGeometry:
    """Static zone layout of the namespace.

    zone_cap_blocks may be smaller than zone_size_blocks; the gap between
    capacity and size is an addressable but never-writable LBA hole, and
    zone starting LBAs are spaced by zone_size_blocks.
    """

    zone_size_blocks: int
    zone_cap_blocks: int
    num_zones: int
    block_bytes: int
    max_open_zones: int
    max_active_zones: int

    def __post_init__(self) -> None:
        for name in ("zone_size_blocks", "zone_cap_blocks", "num_zones",
                     "max_open_zones", "max_active_zones"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be positive")
        if self.block_bytes not in (512, 4096):
            raise GeometryError("block_bytes must be 512 or 4096")
        if self.zone_cap_blocks > self.zone_size_blocks:
            raise GeometryError("zone_cap_blocks exceeds zone_size_blocks")
        if not (self.max_open_zones <= self.max_active_zones <= self.num_zones):
            raise GeometryError(
                "require max_open_zones <= max_active_zones <= num_zones")

    @property
    def namespace_blocks(self) -> int:
        return self.num_zones * self.zone_size_blocks

    def zslba(self, zone_id: int) -> int:
        return zone_id * self.zone_size_blocks

    def zone_of(self, lba: int) -> int:
        return lba // self.zone_size_blocks


@dataclass
class Zone:
    id: int
    state: str = EMPTY
    write_pointer: int = 0  # blocks written since last reset
    finished_before_reset: bool = False


@dataclass
class Admission:
    """Outcome of one admission attempt.

    occupancy_before / finished_before snapshot the state the command saw,
    so the timing model can price finish/reset after the zone has already
    transitioned.  implicit_open marks the I/O that dragged the zone out of
    empty/closed and owes the one-time open surcharge.
    """

    status: str
    assigned_lba: int | None = None
    implicit_open: bool = False
    occupancy_before: float = 0.0
    finished_before: bool = False
    zero_fill: bool = False
    noop: bool = False

    @property
    def ok(self) -> bool:
        return self.status == OK


class ZnsDevice:
    """Single-namespace ZNS device state machine.

    All methods are synchronous state transitions; concurrency is the
    engine's business.  Per-zone write serialization is likewise enforced
    by the engine's write gate, not here: admission only checks the state
    machine, limits and the sequential-write rule.
    """

    def __init__(self, geometry: DeviceGeometry):
        self.geometry = geometry
        self.zones = [Zone(i) for i in range(geometry.num_zones)]
        self.open_count = 0
        self.active_count = 0
        self.peak_open = 0
        self.peak_active = 0
        self.reset_noop_count = 0

    # -- helpers -----------------------------------------------------------

    def _occupancy(self, zone: Zone) -> float:
        return zone.write_pointer / self.geometry.zone_cap_blocks

    def _claim(self, opens: int, actives: int) -> None:
        self.open_count += opens
        self.active_count += actives
        self.peak_open = max(self.peak_open, self.open_count)
        self.peak_active = max(self.peak_active, self.active_count)

    def _check_zone_id(self, zone_id: int) -> bool:
        return 0 <= zone_id < self.geometry.num_zones

    def _open_for_io(self, zone: Zone) -> str | None:
        """Implicitly open an empty or closed zone for a write/append.

        Returns an error code if a limit blocks the transition, else None.
        """
        if zone.state == EMPTY:
            if self.active_count >= self.geometry.max_active_zones:
                return TOO_MANY_ACTIVE
            if self.open_count >= self.geometry.max_open_zones:
                return TOO_MANY_OPEN
            zone.state = IMPLICIT_OPEN
            self._claim(1, 1)
            return None
        if zone.state == CLOSED:
            if self.open_count >= self.geometry.max_open_zones:
                return TOO_MANY_OPEN
            zone.state = IMPLICIT_OPEN
            self._claim(1, 0)
            return None
        return None

    def _release_on_full(self, zone: Zone) -> None:
        if zone.state in OPEN_STATES:
            self._claim(-1, -1)
        elif zone.state == CLOSED:
            self._claim(0, -1)
        zone.state = FULL

    # -- I/O admission -----------------------------------------------------

    def submit_write(self, zone_id: int, lba: int, nblocks: int) -> Admission:
        if nblocks < 1:
            raise ValueError("nblocks must be >= 1")
        if not self._check_zone_id(zone_id):
            return Admission(BOUNDS_EXCEEDED)
        zone = self.zones[zone_id]
        if zone.state == FULL:
            return Admission(ZONE_FULL)
        if lba != self.geometry.zslba(zone_id) + zone.write_pointer:
            return Admission(UNALIGNED_WRITE)
        if zone.write_pointer + nblocks > self.geometry.zone_cap_blocks:
            # whole-request rejection, never partially applied
            return Admission(BOUNDS_EXCEEDED)
        was = zone.state
        err = self._open_for_io(zone)
        if err is not None:
            return Admission(err)
        zone.write_pointer += nblocks
        if zone.write_pointer == self.geometry.zone_cap_blocks:
            self._release_on_full(zone)
        return Admission(OK, implicit_open=(was in (EMPTY, CLOSED)))

    def submit_append(self, zone_id: int, nblocks: int) -> Admission:
        if nblocks < 1:
            raise ValueError("nblocks must be >= 1")
        if not self._check_zone_id(zone_id):
            return Admission(BOUNDS_EXCEEDED)
        zone = self.zones[zone_id]
        if zone.state == FULL:
            return Admission(ZONE_FULL)
        if zone.write_pointer + nblocks > self.geometry.zone_cap_blocks:
            return Admission(BOUNDS_EXCEEDED)
        was = zone.state
        err = self._open_for_io(zone)
        if err is not None:
            return Admission(err)
        assigned = self.geometry.zslba(zone_id) + zone.write_pointer
        zone.write_pointer += nblocks
        if zone.write_pointer == self.geometry.zone_cap_blocks:
            self._release_on_full(zone)
        return Admission(OK, assigned_lba=assigned,
                         implicit_open=(was in (EMPTY, CLOSED)))

    def submit_read(self, lba: int, nblocks: int) -> Admission:
        if nblocks < 1:
            raise ValueError("nblocks must be >= 1")
        if lba < 0 or lba + nblocks > self.geometry.namespace_blocks:
            return Admission(BOUNDS_EXCEEDED)
        return Admission(OK, zero_fill=not self._range_written(lba, nblocks))

    def _range_written(self, lba: int, nblocks: int) -> bool:
        size = self.geometry.zone_size_blocks
        end = lba + nblocks
        while lba < end:
            zone = self.zones[lba // size]
            off = lba - self.geometry.zslba(zone.id)
            span = min(end - lba, size - off)
            if off + span > zone.write_pointer:
                return False
            lba += span
        return True

    # -- management --------------------------------------------------------

    def zone_manage(self, zone_id: int, action: str) -> Admission:
        if not self._check_zone_id(zone_id):
            return Admission(BOUNDS_EXCEEDED)
        zone = self.zones[zone_id]
        occ = self._occupancy(zone)
        fin = zone.finished_before_reset

        if action == OPEN:
            if zone.state not in (EMPTY, CLOSED):
                return Admission(INVALID_TRANSITION)
            if zone.state == EMPTY:
                if self.active_count >= self.geometry.max_active_zones:
                    return Admission(TOO_MANY_ACTIVE)
                if self.open_count >= self.geometry.max_open_zones:
                    return Admission(TOO_MANY_OPEN)
                zone.state = EXPLICIT_OPEN
                self._claim(1, 1)
            else:
                if self.open_count >= self.geometry.max_open_zones:
                    return Admission(TOO_MANY_OPEN)
                zone.state = EXPLICIT_OPEN
                self._claim(1, 0)
            return Admission(OK, occupancy_before=occ)

        if action == CLOSE:
            if zone.state not in OPEN_STATES:
                return Admission(INVALID_TRANSITION)
            zone.state = CLOSED
            self._claim(-1, 0)
            return Admission(OK, occupancy_before=occ)

        if action == FINISH:
            if zone.state in (EMPTY, FULL):
                return Admission(INVALID_TRANSITION)
            zone.finished_before_reset = (
                zone.write_pointer < self.geometry.zone_cap_blocks)
            self._release_on_full(zone)
            return Admission(OK, occupancy_before=occ)

        if action == RESET:
            if zone.state == EMPTY:
                self.reset_noop_count += 1
                return Admission(OK, occupancy_before=0.0, noop=True)
            if zone.state in OPEN_STATES:
                self._claim(-1, -1)
            elif zone.state == CLOSED:
                self._claim(0, -1)
            zone.state = EMPTY
            zone.write_pointer = 0
            zone.finished_before_reset = False
            return Admission(OK, occupancy_before=occ, finished_before=fin)

        raise ValueError(f"unknown management action {action!r}")

    # -- staging (harness plumbing, not an NVMe command) --------------------

    def stage_occupancy(self, zone_id: int, fraction: float) -> None:
        """Instantly set a zone's written prefix to fraction * capacity.

        Stands in for the timed fill the benchmarks performed before each
        management measurement.  The zone must be empty; a partial fill
        claims open/active slots exactly like an implicit open would, a
        complete fill lands the zone in full (claiming nothing).
        """
        if not self._check_zone_id(zone_id):
            raise ValueError(f"zone {zone_id} out of range")
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        zone = self.zones[zone_id]
        if zone.state != EMPTY:
            raise StagingError(f"zone {zone_id} not empty, cannot stage",
                               INVALID_TRANSITION)
        wp = round(fraction * self.geometry.zone_cap_blocks)
        if wp == 0:
            return
        if wp >= self.geometry.zone_cap_blocks:
            zone.write_pointer = self.geometry.zone_cap_blocks
            zone.state = FULL
            return
        if self.active_count >= self.geometry.max_active_zones:
            raise StagingError("staging would exceed max_active_zones",
                               TOO_MANY_ACTIVE)
        if self.open_count >= self.geometry.max_open_zones:
            raise StagingError("staging would exceed max_open_zones",
                               TOO_MANY_OPEN)
        zone.write_pointer = wp
        zone.state = IMPLICIT_OPEN
        self._claim(1, 1)

    # -- reporting ----------------------------------------------------------

    def zone_report(self, zone_id: int) -> Zone:
        if not self._check_zone_id(zone_id):
            raise IndexError(f"zone {zone_id} out of range")
        z = self.zones[zone_id]
        return Zone(z.id, z.state, z.write_pointer, z.finished_before_reset)

    def device_report(self) -> dict:
        counts = {state: 0 for state in ZONE_STATES}
        for zone in self.zones:
            counts[zone.state] += 1
        return {
            "state_counts": counts,
            "open": self.open_count,
            "active": self.active_count,
            "peak_open": self.peak_open,
            "peak_active": self.peak_active,
            "reset_noop_count": self.reset_noop_count,
        }
