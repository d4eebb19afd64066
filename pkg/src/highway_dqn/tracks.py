"""Trajectory corpora: parsing, validation and canonical serialization.

A TrackSet is the replayable world the simulator drives through: per-vehicle
trajectories on a shared frame clock over a fixed three-lane geometry.
TrackSets are immutable once built and safe to share between environments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = "vehicle_id,frame,x,y,vx,vy,length,width"

# sanity bound on longitudinal speed (m/s)
MAX_SPEED = 60.0


class TrackFormatError(ValueError):
    """Base class for trajectory ingestion errors."""


class MalformedRow(TrackFormatError):
    def __init__(self, line: int, reason: str = ""):
        detail = f": {reason}" if reason else ""
        super().__init__(f"malformed row at line {line}{detail}")
        self.line = line


class FrameGap(TrackFormatError):
    def __init__(self, vehicle_id: int, frame: int):
        super().__init__(f"vehicle {vehicle_id}: non-contiguous frame {frame}")
        self.vehicle_id = vehicle_id
        self.frame = frame


class OutOfBounds(TrackFormatError):
    def __init__(self, vehicle_id: int, frame: int):
        super().__init__(f"vehicle {vehicle_id}: x out of track bounds at frame {frame}")
        self.vehicle_id = vehicle_id
        self.frame = frame


@dataclass(frozen=True)
class LaneGeometry:
    """Three-lane straight highway; lane 0 is rightmost, lane 2 leftmost."""

    lane_width: float = 3.5
    track_length: float = 420.0
    lane_count: int = 3

    def __post_init__(self):
        if self.lane_count != 3:
            raise ValueError("geometry is fixed at three lanes")
        if self.lane_width <= 0 or self.track_length <= 0:
            raise ValueError("lane_width and track_length must be positive")

    @property
    def lane_centers(self) -> tuple[float, ...]:
        return tuple((i + 0.5) * self.lane_width for i in range(self.lane_count))

    def lane_of(self, y: float) -> int:
        """Nearest-lane-center rule used everywhere lane ids are derived."""
        centers = self.lane_centers
        return int(np.argmin([abs(y - c) for c in centers]))


@dataclass(frozen=True)
class TrackPoint:
    frame: int
    x: float
    y: float
    vx: float
    vy: float
    lane_id: int


@dataclass(frozen=True)
class VehicleTrack:
    vehicle_id: int
    length: float
    width: float
    points: tuple[TrackPoint, ...]

    @property
    def first_frame(self) -> int:
        return self.points[0].frame

    @property
    def last_frame(self) -> int:
        return self.points[-1].frame

    def point_at(self, frame: int) -> TrackPoint | None:
        """Point at an absolute frame, or None outside the vehicle's span."""
        idx = frame - self.first_frame
        if 0 <= idx < len(self.points):
            return self.points[idx]
        return None

    @property
    def lane_ids(self) -> np.ndarray:
        return np.array([p.lane_id for p in self.points], dtype=int)


@dataclass(frozen=True)
class TrackSet:
    geometry: LaneGeometry
    dt: float
    vehicles: tuple[VehicleTrack, ...]
    track_id: str = "track"
    _caches: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def max_frame(self) -> int | None:
        """Last frame with any replay data; None for an empty corpus."""
        if not self.vehicles:
            return None
        return max(v.last_frame for v in self.vehicles)

    def vehicle(self, vehicle_id: int) -> VehicleTrack | None:
        by_id = self._caches.get("by_id")
        if by_id is None:
            by_id = {v.vehicle_id: v for v in self.vehicles}
            self._caches["by_id"] = by_id
        return by_id.get(vehicle_id)

    def present_at(self, frame: int) -> list[tuple[VehicleTrack, TrackPoint]]:
        out = []
        for v in self.vehicles:
            p = v.point_at(frame)
            if p is not None:
                out.append((v, p))
        return out


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate(); data, not an exception."""

    kind: str  # overlap | frame_gap | lane_skip | out_of_bounds | lane_mismatch | speed_bound
    vehicle_ids: tuple[int, ...]
    frame: int
    detail: str = ""


def parse_tracks(csv_text: str, geometry: LaneGeometry, dt: float, track_id: str = "track") -> TrackSet:
    """Parse a HighD-schema CSV into a TrackSet.

    Rows are grouped by vehicle and sorted by frame; lane ids are derived
    from y via the nearest lane center. Raises MalformedRow, FrameGap or
    OutOfBounds on the first offending row.
    """
    lines = csv_text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise MalformedRow(1, "missing or wrong header")

    rows: dict[int, list[tuple[int, float, float, float, float, float, float]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise MalformedRow(lineno, f"expected 8 fields, got {len(parts)}")
        try:
            vid = int(parts[0])
            frame = int(parts[1])
            vals = [float(p) for p in parts[2:]]
        except ValueError:
            raise MalformedRow(lineno, "non-numeric field") from None
        if not all(np.isfinite(vals)):
            raise MalformedRow(lineno, "non-finite field")
        rows.setdefault(vid, []).append((frame, *vals))

    vehicles = []
    for vid in sorted(rows):
        recs = sorted(rows[vid], key=lambda r: r[0])
        length, width = recs[0][5], recs[0][6]
        points = []
        prev_frame = None
        for frame, x, y, vx, vy, _, _ in recs:
            if prev_frame is not None and frame != prev_frame + 1:
                raise FrameGap(vid, frame)
            prev_frame = frame
            if not 0.0 <= x <= geometry.track_length:
                raise OutOfBounds(vid, frame)
            points.append(TrackPoint(frame, x, y, vx, vy, geometry.lane_of(y)))
        vehicles.append(VehicleTrack(vid, length, width, tuple(points)))

    return TrackSet(geometry, dt, tuple(vehicles), track_id)


def serialize_tracks(ts: TrackSet) -> str:
    """Canonical CSV form: fixed field order, floats at 6 decimal places."""

    def fmt(v: float) -> str:
        s = f"{v:.6f}"
        return "0.000000" if s == "-0.000000" else s

    out = [CSV_HEADER]
    for veh in sorted(ts.vehicles, key=lambda v: v.vehicle_id):
        for p in veh.points:
            out.append(
                f"{veh.vehicle_id},{p.frame},{fmt(p.x)},{fmt(p.y)},"
                f"{fmt(p.vx)},{fmt(p.vy)},{fmt(veh.length)},{fmt(veh.width)}"
            )
    return "\n".join(out) + "\n"


def boxes_overlap(x1: float, y1: float, l1: float, w1: float,
                  x2: float, y2: float, l2: float, w2: float) -> bool:
    """Axis-aligned box overlap; touching boxes do not collide."""
    return abs(x1 - x2) < (l1 + l2) / 2.0 and abs(y1 - y2) < (w1 + w2) / 2.0


def validate(ts: TrackSet) -> list[Violation]:
    """Check every TrackSet invariant; returns violations as data."""
    violations: list[Violation] = []
    geo = ts.geometry

    for veh in ts.vehicles:
        prev = None
        for p in veh.points:
            if prev is not None:
                if p.frame != prev.frame + 1:
                    violations.append(Violation("frame_gap", (veh.vehicle_id,), p.frame))
                if abs(p.lane_id - prev.lane_id) > 1:
                    violations.append(Violation("lane_skip", (veh.vehicle_id,), p.frame,
                                                f"{prev.lane_id}->{p.lane_id}"))
            if not 0.0 <= p.x <= geo.track_length:
                violations.append(Violation("out_of_bounds", (veh.vehicle_id,), p.frame))
            if p.lane_id != geo.lane_of(p.y):
                violations.append(Violation("lane_mismatch", (veh.vehicle_id,), p.frame))
            if abs(p.vx) > MAX_SPEED:
                violations.append(Violation("speed_bound", (veh.vehicle_id,), p.frame))
            prev = p

    coords = {
        v.vehicle_id: (np.array([p.x for p in v.points]), np.array([p.y for p in v.points]))
        for v in ts.vehicles
    }
    for i, a in enumerate(ts.vehicles):
        xa, ya = coords[a.vehicle_id]
        for b in ts.vehicles[i + 1:]:
            lo = max(a.first_frame, b.first_frame)
            hi = min(a.last_frame, b.last_frame)
            if lo > hi:
                continue
            xb, yb = coords[b.vehicle_id]
            sa = slice(lo - a.first_frame, hi - a.first_frame + 1)
            sb = slice(lo - b.first_frame, hi - b.first_frame + 1)
            hit = (np.abs(xa[sa] - xb[sb]) < (a.length + b.length) / 2.0) & (
                np.abs(ya[sa] - yb[sb]) < (a.width + b.width) / 2.0
            )
            for idx in np.nonzero(hit)[0]:
                violations.append(Violation("overlap", (a.vehicle_id, b.vehicle_id), lo + int(idx)))

    return violations
