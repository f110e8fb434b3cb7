"""Calibrated timing model for one physical device.

Everything the simulator knows about time lives here: the per-stack base
latency table, management-op costs, the occupancy-dependent reset/finish
models, interference multipliers, saturation ceilings and the optional
latency jitter.  A DeviceProfile is immutable after load and all its
evaluation methods are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .device import (WRITE, APPEND, OPEN, CLOSE, FINISH, RESET, IO_KINDS,
                     DeviceGeometry)

USERSPACE_DIRECT = "userspace-direct"
KERNEL_NOSCHED = "kernel-nosched"
KERNEL_MERGE_SCHED = "kernel-merge-sched"
STACKS = (USERSPACE_DIRECT, KERNEL_NOSCHED, KERNEL_MERGE_SCHED)

# 95th-percentile z-score of the standard normal, for lognormal sigma.
_Z95 = 1.6448536269514722


class ProfileError(ValueError):
    pass


class UnknownOpKind(ProfileError):
    pass


class DegenerateSamples(ValueError):
    """Fewer distinct sample abscissae than the fit requires."""


@dataclass(frozen=True)
class OccupancyModel:
    """Piecewise-linear latency-vs-occupancy curve.

    Anchors are (occupancy_fraction, latency_ms) sorted strictly by
    occupancy; evaluation interpolates between anchors and clamps outside
    the anchored range.
    """

    anchors: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.anchors) < 2:
            raise ProfileError("occupancy model needs at least 2 anchors")
        xs = [x for x, _ in self.anchors]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ProfileError("anchors must increase strictly in occupancy")
        if any(not 0.0 <= x <= 1.0 for x in xs):
            raise ProfileError("anchor occupancies must lie in [0, 1]")
        if any(y <= 0.0 for _, y in self.anchors):
            raise ProfileError("anchor latencies must be positive")

    def evaluate_ms(self, occupancy: float) -> float:
        pts = self.anchors
        if occupancy <= pts[0][0]:
            return pts[0][1]
        if occupancy >= pts[-1][0]:
            return pts[-1][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if occupancy <= x1:
                t = (occupancy - x0) / (x1 - x0)
                return y0 + t * (y1 - y0)
        return pts[-1][1]

    def to_json(self) -> list[list[float]]:
        return [[x, y] for x, y in self.anchors]


@dataclass(frozen=True)
class StationSpec:
    max_iops: float | None
    parallelism_slots: int

    def __post_init__(self) -> None:
        if self.parallelism_slots < 1:
            raise ProfileError("parallelism_slots must be >= 1")
        if self.max_iops is not None and self.max_iops <= 0:
            raise ProfileError("max_iops must be positive")


@dataclass(frozen=True)
class SaturationModel:
    stations: dict  # op kind -> StationSpec
    bandwidth_ceiling_mib_s: float
    inter_zone_write_max_iops: float

    def __post_init__(self) -> None:
        if self.bandwidth_ceiling_mib_s <= 0:
            raise ProfileError("bandwidth ceiling must be positive")
        if self.inter_zone_write_max_iops <= 0:
            raise ProfileError("inter_zone_write_max_iops must be positive")


@dataclass(frozen=True)
class JitterSpec:
    mode: str = "none"  # none | lognormal
    p95_over_median: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in ("none", "lognormal"):
            raise ProfileError(f"unknown jitter mode {self.mode!r}")
        for kind, ratio in self.p95_over_median.items():
            if ratio < 1.0:
                raise ProfileError(f"p95_over_median[{kind}] must be >= 1")


class DeviceProfile:
    """Frozen table of every calibrated timing quantity.

    base[stack][kind][lba_format] is a size-sorted list of
    (request_bytes, latency_us) rows.  Lookups interpolate linearly in
    request size; beyond the largest tabulated size the edge segment's
    slope (bytes per microsecond near the bandwidth ceiling) is extended,
    below the smallest the table clamps.
    """

    def __init__(self, name, base_latency_us, open_latency_us, close_latency_us,
                 implicit_open_surcharge_us, reset_model, reset_finished_delta_ms,
                 finish_model, reset_interference_multiplier, ceilings, jitter):
        self.name = name
        self.base = base_latency_us
        self.open_latency_us = float(open_latency_us)
        self.close_latency_us = float(close_latency_us)
        self.implicit_open_surcharge_us = dict(implicit_open_surcharge_us)
        self.reset_model = reset_model
        self.reset_finished_delta_ms = float(reset_finished_delta_ms)
        self.finish_model = finish_model
        self.reset_interference_multiplier = dict(reset_interference_multiplier)
        self.ceilings = ceilings
        self.jitter = jitter
        self._validate()

    def _validate(self) -> None:
        if self.open_latency_us <= 0 or self.close_latency_us <= 0:
            raise ProfileError("management latencies must be positive")
        for stack, kinds in self.base.items():
            if stack not in STACKS:
                raise ProfileError(f"unknown host stack {stack!r}")
            for kind, formats in kinds.items():
                if kind not in IO_KINDS:
                    raise ProfileError(f"unknown I/O kind {kind!r} in table")
                for fmt, rows in formats.items():
                    if not rows:
                        raise ProfileError("empty latency table row set")
                    sizes = [s for s, _ in rows]
                    if sizes != sorted(set(sizes)):
                        raise ProfileError(
                            f"table sizes must be strictly increasing "
                            f"({stack}/{kind}/{fmt})")
                    if any(us <= 0 for _, us in rows):
                        raise ProfileError("latencies must be positive")
        for kind, mult in self.reset_interference_multiplier.items():
            if mult < 1.0:
                raise ProfileError(f"interference multiplier for {kind} < 1")

    def validation_warnings(self) -> list[str]:
        """Soft checks: append is expected to cost at least as much as write
        at equal size within a stack, with a gap no larger than 25%."""
        warnings = []
        for stack, kinds in self.base.items():
            if WRITE not in kinds or APPEND not in kinds:
                continue
            for fmt, wrows in kinds[WRITE].items():
                arows = dict(kinds[APPEND].get(fmt, []))
                for size, wus in wrows:
                    aus = arows.get(size)
                    if aus is None:
                        continue
                    if aus < wus:
                        warnings.append(
                            f"append faster than write at {size} B ({stack})")
                    elif aus > wus * 1.25:
                        warnings.append(
                            f"append/write gap over 25% at {size} B ({stack})")
        return warnings

    # -- base latency --------------------------------------------------------

    def base_latency(self, kind: str, req_bytes: int, lba_format: int,
                     stack: str) -> float:
        """Latency in us for one request, interpolated in request size."""
        if kind not in IO_KINDS:
            raise UnknownOpKind(f"no base latency for op kind {kind!r}")
        try:
            rows = self.base[stack][kind][lba_format]
        except KeyError:
            raise ProfileError(
                f"no base latency tabulated for ({kind}, {stack}, "
                f"{lba_format} B format)") from None
        if len(rows) == 1:
            return rows[0][1]
        sizes = [s for s, _ in rows]
        lats = [l for _, l in rows]
        if req_bytes <= sizes[0]:
            return lats[0]
        if req_bytes >= sizes[-1]:
            # extend the edge segment's slope (large requests are
            # bandwidth-bound, so the slope is ~1/ceiling)
            slope = (lats[-1] - lats[-2]) / (sizes[-1] - sizes[-2])
            return lats[-1] + slope * (req_bytes - sizes[-1])
        for i in range(1, len(rows)):
            if req_bytes <= sizes[i]:
                t = (req_bytes - sizes[i - 1]) / (sizes[i] - sizes[i - 1])
                return lats[i - 1] + t * (lats[i] - lats[i - 1])
        return lats[-1]

    def has_base_latency(self, kind: str, lba_format: int, stack: str) -> bool:
        try:
            return bool(self.base[stack][kind][lba_format])
        except KeyError:
            return False

    # -- management costs ----------------------------------------------------

    def finish_latency_ms(self, occupancy: float) -> float:
        return self.finish_model.evaluate_ms(occupancy)

    def reset_latency_ms(self, occupancy: float,
                         finished_before_reset: bool = False) -> float:
        base = self.reset_model.evaluate_ms(occupancy)
        if finished_before_reset:
            base += self.reset_finished_delta_ms
        return base

    def management_latency_us(self, action: str, occupancy: float = 0.0,
                              finished_before_reset: bool = False) -> float:
        if action == OPEN:
            return self.open_latency_us
        if action == CLOSE:
            return self.close_latency_us
        if action == FINISH:
            return self.finish_latency_ms(occupancy) * 1000.0
        if action == RESET:
            return self.reset_latency_ms(occupancy, finished_before_reset) * 1000.0
        raise UnknownOpKind(f"unknown management action {action!r}")

    def implicit_open_surcharge(self, kind: str) -> float:
        if kind not in (WRITE, APPEND):
            raise UnknownOpKind(f"no implicit-open surcharge for {kind!r}")
        return self.implicit_open_surcharge_us[kind]

    # -- interference --------------------------------------------------------

    def reset_interference_factor(self, concurrent_kinds) -> float:
        """Multiplier on the whole reset latency.

        One concurrent kind was measured at a time, so concurrent kinds do
        not compound: the largest per-kind multiplier wins.
        """
        factor = 1.0
        for kind in concurrent_kinds:
            factor = max(factor,
                         self.reset_interference_multiplier.get(kind, 1.0))
        return factor

    def io_interference_factor(self, concurrent_resets: bool = False) -> float:
        """Resets never inflate read/write/append latency."""
        return 1.0

    # -- jitter ---------------------------------------------------------------

    def sample_latency(self, base_us: float, kind: str, rng) -> float:
        """Draw one latency; median equals base_us in lognormal mode."""
        if base_us <= 0:
            raise ValueError("base latency must be positive")
        if self.jitter.mode == "none":
            return base_us
        ratio = self.jitter.p95_over_median.get(kind, 1.0)
        if ratio <= 1.0:
            return base_us
        sigma = math.log(ratio) / _Z95
        return base_us * math.exp(sigma * rng.gauss(0.0, 1.0))


# -- profile fitting ----------------------------------------------------------

def fit_occupancy_model(samples, num_segments: int) -> tuple[OccupancyModel, float]:
    """Least-squares piecewise-linear fit of (occupancy, latency_ms) samples.

    Anchor occupancies sit at the quantiles of the distinct sample
    occupancies; anchor latencies are the least-squares solution over the
    linear-spline basis.  Returns the model and the RMS residual.
    """
    if num_segments < 1:
        raise ValueError("num_segments must be >= 1")
    pts = [(float(x), float(y)) for x, y in samples]
    xs = np.array([x for x, _ in pts])
    ys = np.array([y for _, y in pts])
    distinct = np.unique(xs)
    if distinct.size < num_segments + 1:
        raise DegenerateSamples(
            f"need at least {num_segments + 1} distinct occupancies, "
            f"got {distinct.size}")
    anchors_x = np.quantile(distinct, np.linspace(0.0, 1.0, num_segments + 1))
    anchors_x = np.unique(anchors_x)
    if anchors_x.size < num_segments + 1:
        raise DegenerateSamples("sample quantiles collapse; too few spread-out "
                                "occupancies for the requested segment count")
    design = _hat_basis(xs, anchors_x)
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = design @ coef - ys
    rms = float(np.sqrt(np.mean(resid ** 2)))
    model = OccupancyModel(tuple((float(x), float(y))
                                 for x, y in zip(anchors_x, coef)))
    return model, rms


def _hat_basis(xs: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Linear-spline interpolation basis evaluated at xs (clamped)."""
    x = np.clip(xs, knots[0], knots[-1])
    n = knots.size
    out = np.zeros((x.size, n))
    seg = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, n - 2)
    x0 = knots[seg]
    x1 = knots[seg + 1]
    t = (x - x0) / (x1 - x0)
    rows = np.arange(x.size)
    out[rows, seg] = 1.0 - t
    out[rows, seg + 1] = t
    return out


# -- JSON (de)serialization ----------------------------------------------------

def profile_from_dict(doc: dict) -> DeviceProfile:
    base = {}
    for stack, kinds in doc["base_latency_us"].items():
        base[stack] = {}
        for kind, formats in kinds.items():
            base[stack][kind] = {}
            for fmt, rows in formats.items():
                base[stack][kind][int(fmt)] = [
                    (int(size), float(us)) for size, us in rows]
    ceilings_doc = doc["ceilings"]
    stations = {}
    for kind, spec in ceilings_doc["stations"].items():
        stations[kind] = StationSpec(
            max_iops=spec.get("max_iops"),
            parallelism_slots=int(spec["parallelism_slots"]))
    ceilings = SaturationModel(
        stations=stations,
        bandwidth_ceiling_mib_s=float(ceilings_doc["bandwidth_ceiling_mib_s"]),
        inter_zone_write_max_iops=float(
            ceilings_doc["inter_zone_write_max_iops"]))
    jitter_doc = doc.get("jitter", {})
    jitter = JitterSpec(
        mode=jitter_doc.get("mode", "none"),
        p95_over_median=dict(jitter_doc.get("p95_over_median", {})))
    return DeviceProfile(
        name=doc.get("name", "unnamed"),
        base_latency_us=base,
        open_latency_us=doc["open_latency_us"],
        close_latency_us=doc["close_latency_us"],
        implicit_open_surcharge_us=doc["implicit_open_surcharge_us"],
        reset_model=OccupancyModel(
            tuple((float(x), float(y)) for x, y in doc["reset_model_ms"])),
        reset_finished_delta_ms=doc["reset_finished_delta_ms"],
        finish_model=OccupancyModel(
            tuple((float(x), float(y)) for x, y in doc["finish_model_ms"])),
        reset_interference_multiplier=doc["reset_interference_multiplier"],
        ceilings=ceilings,
        jitter=jitter,
    )


def geometry_from_dict(doc: dict) -> DeviceGeometry:
    return DeviceGeometry(
        zone_size_blocks=int(doc["zone_size_blocks"]),
        zone_cap_blocks=int(doc["zone_cap_blocks"]),
        num_zones=int(doc["num_zones"]),
        block_bytes=int(doc["block_bytes"]),
        max_open_zones=int(doc["max_open_zones"]),
        max_active_zones=int(doc["max_active_zones"]),
    )


def load_device_file(path) -> tuple:
    """Load a device file: geometry plus timing profile, one JSON document."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return geometry_from_dict(doc["geometry"]), profile_from_dict(doc)


def load_builtin(name: str = "zn540") -> tuple:
    """Load a profile shipped inside the package (profiles/<name>.json)."""
    from importlib.resources import files
    doc = json.loads(files("znsim").joinpath(f"profiles/{name}.json")
                     .read_text(encoding="utf-8"))
    return geometry_from_dict(doc["geometry"]), profile_from_dict(doc)
