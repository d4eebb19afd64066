"""Deterministic synthetic traffic generator.

Stands in for licensed drone-recorded corpora: background vehicles follow
the IDM longitudinally, scripted lane changes ramp laterally at constant
speed, and the result is guaranteed collision-free among itself (attempts
with overlaps are re-sampled from derived seeds).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .idm import FREE_ROAD_GAP, IdmParams, acceleration
from .tracks import LaneGeometry, TrackPoint, TrackSet, VehicleTrack, validate

RETRY_BUDGET = 20


class InfeasibleConfig(ValueError):
    """Raised when no collision-free corpus exists within the retry budget."""


@dataclass(frozen=True)
class LaneChangeEvent:
    """Scripted lane change: `vehicle` starts ramping at `start_s` for `duration_s`.

    direction +1 moves one lane left (higher index), -1 one lane right.
    """

    vehicle: int
    start_s: float
    direction: int
    duration_s: float = 2.0

    def __post_init__(self):
        if self.direction not in (-1, 1):
            raise InfeasibleConfig(f"lane change direction must be +-1, got {self.direction}")
        if self.duration_s <= 0 or self.start_s < 0:
            raise InfeasibleConfig("lane change timing must be positive")


@dataclass(frozen=True)
class SynthConfig:
    geometry: LaneGeometry = field(default_factory=LaneGeometry)
    dt: float = 0.1
    duration_s: float = 60.0
    vehicle_count: int = 0
    speed_min: float = 20.0
    speed_max: float = 30.0
    spawn_rate_per_s: float = 0.0  # arrival rate of streamed vehicles at x=0
    initial_count: int | None = None  # None: all initial when rate=0, none otherwise
    min_spawn_gap: float = 12.0
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0
    lane_change_events: tuple[LaneChangeEvent, ...] = ()
    random_lane_changes: int = 0
    random_lc_duration: float = 2.0
    # optional per-vehicle pinning; None entries fall back to random draws
    spawn_lanes: tuple[int | None, ...] | None = None
    spawn_xs: tuple[float | None, ...] | None = None
    spawn_speeds: tuple[float | None, ...] | None = None
    idm: IdmParams = field(default_factory=IdmParams)
    track_id: str = "synth"


def _pin(cfg_tuple, i):
    if cfg_tuple is None or i >= len(cfg_tuple):
        return None
    return cfg_tuple[i]


def _initial_count(cfg: SynthConfig) -> int:
    if cfg.initial_count is not None:
        return min(cfg.initial_count, cfg.vehicle_count)
    return cfg.vehicle_count if cfg.spawn_rate_per_s == 0 else 0


def _draw_spawns(cfg: SynthConfig, rng: np.random.Generator):
    """Initial (lane, x, v) per vehicle with per-lane spacing guarantees.

    Vehicles with index >= the initial count are streamed in later and only
    get a lane and speed here.
    """
    geo = cfg.geometry
    n = cfg.vehicle_count
    n_init = _initial_count(cfg)
    lanes = np.empty(n, dtype=int)
    for i in range(n):
        pin = _pin(cfg.spawn_lanes, i)
        lanes[i] = rng.integers(0, geo.lane_count) if pin is None else pin

    xs = np.zeros(n)
    slot = cfg.vehicle_length + cfg.min_spawn_gap
    for lane in range(geo.lane_count):
        idxs = [i for i in range(n_init) if lanes[i] == lane and _pin(cfg.spawn_xs, i) is None]
        if not idxs:
            continue
        spacing = geo.track_length / len(idxs)
        if spacing < slot:
            raise _Resample(f"lane {lane} too dense for collision-free spawn")
        jitter = rng.uniform(0.0, spacing - slot, size=len(idxs))
        order = rng.permutation(len(idxs))
        for rank, which in enumerate(order):
            xs[idxs[which]] = rank * spacing + jitter[rank]
    for i in range(n):
        pin = _pin(cfg.spawn_xs, i)
        if pin is not None:
            xs[i] = pin

    vs = np.array([
        _pin(cfg.spawn_speeds, i)
        if _pin(cfg.spawn_speeds, i) is not None
        else rng.uniform(cfg.speed_min, cfg.speed_max)
        for i in range(n)
    ])
    return lanes, xs, vs


class _Resample(Exception):
    """Internal: this attempt cannot proceed; try the next derived seed."""


def _draw_random_events(cfg: SynthConfig, lanes: np.ndarray, rng: np.random.Generator):
    """Random cut-in style events, direction-valid for the drawn lanes."""
    events = list(cfg.lane_change_events)
    busy: dict[int, list[tuple[float, float]]] = {}
    for ev in events:
        busy.setdefault(ev.vehicle, []).append((ev.start_s, ev.start_s + ev.duration_s))

    t_lo, t_hi = 1.0, cfg.duration_s - cfg.random_lc_duration - 1.0
    if t_hi <= t_lo or cfg.vehicle_count == 0:
        if cfg.random_lane_changes > 0:
            raise _Resample("no room for random lane changes")
        return events

    def timeline_valid(veh: int, candidate: LaneChangeEvent) -> bool:
        """Walk the whole event sequence; every change must stay on the road."""
        lane = int(lanes[veh])
        seq = sorted(
            [e for e in events if e.vehicle == veh] + [candidate],
            key=lambda e: e.start_s,
        )
        for ev in seq:
            lane += ev.direction
            if not 0 <= lane < cfg.geometry.lane_count:
                return False
        return True

    for _ in range(cfg.random_lane_changes):
        for _attempt in range(50):
            veh = int(rng.integers(0, cfg.vehicle_count))
            start = float(rng.uniform(t_lo, t_hi))
            span = (start, start + cfg.random_lc_duration)
            if any(span[0] < b1 and b0 < span[1] for b0, b1 in busy.get(veh, [])):
                continue
            first = 1 if rng.random() < 0.5 else -1
            placed = False
            for direction in (first, -first):
                candidate = LaneChangeEvent(veh, start, direction, cfg.random_lc_duration)
                if timeline_valid(veh, candidate):
                    events.append(candidate)
                    busy.setdefault(veh, []).append(span)
                    placed = True
                    break
            if placed:
                break
        else:
            raise _Resample("could not place a random lane change")
    return events


def _lateral_state(spawn_lane: int, events: list[LaneChangeEvent], geo: LaneGeometry, t: float):
    """(y, vy) at time t: lane centers joined by linear ramps during events."""
    lane = spawn_lane
    for ev in events:
        end = ev.start_s + ev.duration_s
        if t >= end:
            lane += ev.direction
        elif t >= ev.start_s:
            progress = (t - ev.start_s) / ev.duration_s
            y = geo.lane_centers[lane] + ev.direction * geo.lane_width * progress
            return y, ev.direction * geo.lane_width / ev.duration_s
        else:
            break
    return geo.lane_centers[lane], 0.0


def _check_event_feasibility(spawn_lane: int, events: list[LaneChangeEvent], lane_count: int, veh: int):
    lane = spawn_lane
    for ev in events:
        lane += ev.direction
        if not 0 <= lane < lane_count:
            raise InfeasibleConfig(
                f"vehicle {veh} cannot change {'left' if ev.direction > 0 else 'right'}"
                f" out of lane {lane - ev.direction}"
            )


def _simulate(cfg: SynthConfig, rng: np.random.Generator) -> TrackSet:
    geo = cfg.geometry
    dt = cfg.dt
    n_frames = int(round(cfg.duration_s / dt))
    n = cfg.vehicle_count

    lanes, xs, vs = _draw_spawns(cfg, rng)
    events = _draw_random_events(cfg, lanes, rng)
    for ev in events:
        if not 0 <= ev.vehicle < n:
            raise InfeasibleConfig(f"event references unknown vehicle {ev.vehicle}")
    ev_by_vehicle: dict[int, list[LaneChangeEvent]] = {}
    for ev in sorted(events, key=lambda e: e.start_s):
        lst = ev_by_vehicle.setdefault(ev.vehicle, [])
        if lst and ev.start_s < lst[-1].start_s + lst[-1].duration_s:
            raise InfeasibleConfig(f"overlapping lane changes for vehicle {ev.vehicle}")
        lst.append(ev)
    for i, evs in ev_by_vehicle.items():
        _check_event_feasibility(int(lanes[i]), evs, geo.lane_count, i)

    # arrival stream (spawn_rate_per_s > 0): late vehicles enter at x=0 over time
    n_init = _initial_count(cfg)
    entry_frame = np.zeros(n, dtype=int)
    if cfg.spawn_rate_per_s > 0:
        t = 0.0
        for i in range(n_init, n):
            t += rng.exponential(1.0 / cfg.spawn_rate_per_s)
            entry_frame[i] = max(1, int(np.ceil(t / dt)))
            xs[i] = 0.0

    x = xs.copy()
    v = vs.copy()
    y = np.array([geo.lane_centers[l] for l in lanes])
    vy = np.zeros(n)
    active = entry_frame == 0
    gone = np.zeros(n, dtype=bool)
    points: list[list[TrackPoint]] = [[] for _ in range(n)]

    def record(frame: int):
        for i in range(n):
            if active[i]:
                points[i].append(TrackPoint(frame, float(x[i]), float(y[i]),
                                            float(v[i]), float(vy[i]),
                                            geo.lane_of(float(y[i]))))

    record(0)
    for frame in range(1, n_frames + 1):
        t_now = frame * dt
        cur_lane = np.array([geo.lane_of(float(yy)) for yy in y])
        for i in np.argsort(-x):  # front to back, leaders update first
            if not active[i]:
                continue
            gap, v_lead = FREE_ROAD_GAP, 0.0
            for j in range(n):
                if j == i or not active[j] or cur_lane[j] != cur_lane[i]:
                    continue
                dx = x[j] - x[i]
                if 0.0 < dx:
                    g = dx - cfg.vehicle_length
                    if g < gap:
                        gap, v_lead = g, v[j]
            a = -cfg.idm.b_max if gap <= 0 else acceleration(v[i], gap, v_lead, cfg.idm)
            v[i] = max(0.0, v[i] + a * dt)
            x[i] += v[i] * dt
            y[i], vy[i] = _lateral_state(int(lanes[i]), ev_by_vehicle.get(i, []), geo, t_now)
            if x[i] > geo.track_length:
                active[i] = False
                gone[i] = True

        # stream entries: spawn at x=0 once the lane entry is clear
        for i in range(n):
            if active[i] or gone[i] or entry_frame[i] > frame:
                continue
            lane = lanes[i]
            blocked = any(
                active[j] and geo.lane_of(float(y[j])) == lane
                and x[j] < cfg.min_spawn_gap + cfg.vehicle_length
                for j in range(n)
            )
            if blocked:
                entry_frame[i] = frame + 1
            else:
                active[i] = True
                x[i], y[i] = 0.0, geo.lane_centers[lane]
        record(frame)

    vehicles = tuple(
        VehicleTrack(i, cfg.vehicle_length, cfg.vehicle_width, tuple(points[i]))
        for i in range(n)
        if points[i]
    )
    return TrackSet(geo, dt, vehicles, cfg.track_id)


def generate_synthetic(cfg: SynthConfig, seed: int) -> TrackSet:
    """Build a collision-free TrackSet, deterministic for a given (cfg, seed)."""
    children = np.random.SeedSequence(seed).spawn(RETRY_BUDGET)
    last_reason = "unknown"
    for child in children:
        rng = np.random.default_rng(child)
        try:
            ts = _simulate(cfg, rng)
        except _Resample as exc:
            last_reason = str(exc)
            continue
        bad = [viol for viol in validate(ts) if viol.kind == "overlap"]
        if not bad:
            return ts
        last_reason = f"{len(bad)} overlapping frames"
    raise InfeasibleConfig(
        f"no collision-free corpus in {RETRY_BUDGET} attempts (last: {last_reason})"
    )


def with_track_id(cfg: SynthConfig, track_id: str) -> SynthConfig:
    return replace(cfg, track_id=track_id)
