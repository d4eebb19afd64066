"""Episodic highway MDP: trajectory replay, ego physics, rewards, observations.

The ego picks a discrete lateral action once per decision interval; the IDM
handles its longitudinal motion against the current-lane leader. Background
vehicles are replayed verbatim and cannot react to the ego, so collisions
caused by them are avoidable only by anticipation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .idm import FREE_ROAD_GAP, IdmParams, acceleration
from .intention import (
    DEFAULT_HORIZON,
    GroundTruthProvider,
    Intention,
    IntentionProvider,
    NoIntention,
    lane_keep,
)
from .tracks import TrackSet


class Action(enum.IntEnum):
    LLC = 0  # toward higher lane index
    LK = 1
    RLC = 2  # toward lower lane index


SLOT_ORDER = ("same_lead", "same_rear", "left_lead", "left_rear", "right_lead", "right_rear")

BASE_LAYOUT_VERSION = 1
TTLC_LAYOUT_VERSION = 2
BASE_LENGTH = 22
TTLC_LENGTH = 46


class NoFreeSpawn(RuntimeError):
    pass


class EpisodeDone(RuntimeError):
    pass


@dataclass
class EgoState:
    x: float
    y: float
    v: float
    lane_id: int
    # active lane change: (direction, progress in [0,1], source lane)
    lane_change: tuple[int, float, int] | None = None


@dataclass(frozen=True)
class NeighborSlot:
    slot: str
    present: bool
    dx: float
    dv: float
    intention: Intention


@dataclass(frozen=True)
class Observation:
    features: np.ndarray
    layout_version: int

    def __len__(self):
        return len(self.features)


@dataclass(frozen=True)
class StepEvents:
    reached_end: bool = False
    initiated_lane_change: bool = False
    collided: bool = False


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    outcome: str  # running | collision | end_of_track | truncated


@dataclass(frozen=True)
class RewardConfig:
    r_end_of_track: float = 10.0
    r_lane_change: float = 0.1
    r_collision: float = 10.0

    def __post_init__(self):
        if min(self.r_end_of_track, self.r_lane_change, self.r_collision) < 0:
            raise ValueError("reward magnitudes must be non-negative")
        if self.r_lane_change >= min(self.r_end_of_track, self.r_collision):
            raise ValueError("lane-change penalty must stay small against terminal rewards")


@dataclass(frozen=True)
class EnvConfig:
    decision_interval: float = 1.0
    physics_dt: float = 0.1
    lane_change_duration: float = 1.0
    radar_range: float = 250.0
    obs_mode: str = "base"  # base | ttlc
    penalize_masked_actions: bool = False
    ego_length: float = 5.0
    ego_width: float = 2.0
    intention_horizon: float = DEFAULT_HORIZON
    idm: IdmParams = field(default_factory=IdmParams)

    def __post_init__(self):
        if self.obs_mode not in ("base", "ttlc"):
            raise ValueError(f"unknown obs_mode {self.obs_mode!r}")
        n_sub = round(self.decision_interval / self.physics_dt)
        if n_sub < 1 or abs(n_sub * self.physics_dt - self.decision_interval) > 1e-9:
            raise ValueError("decision_interval must be a multiple of physics_dt")

    @property
    def substeps(self) -> int:
        return round(self.decision_interval / self.physics_dt)

    @property
    def obs_length(self) -> int:
        return BASE_LENGTH if self.obs_mode == "base" else TTLC_LENGTH

    @property
    def layout_version(self) -> int:
        return BASE_LAYOUT_VERSION if self.obs_mode == "base" else TTLC_LAYOUT_VERSION


@dataclass(frozen=True)
class SpawnConfig:
    """Fixed values pin the draw; None fields are drawn uniformly per episode.

    Random draws additionally demand a survivable margin to same-lane
    traffic (a fully pinned spawn is honored verbatim, doomed or not).
    """

    lane: int | None = None
    x: float | None = None
    v: float | None = None
    x_range: tuple[float, float] = (0.0, 60.0)
    v_range: tuple[float, float] = (20.0, 33.0)
    max_retries: int = 100


def obs_layout(mode: str) -> list[tuple[int, str]]:
    """Documented index -> feature-name table for one observation mode."""
    names = ["ego_lane_0", "ego_lane_1", "ego_lane_2", "ego_speed"]
    for slot in SLOT_ORDER:
        names += [f"{slot}.present", f"{slot}.dx", f"{slot}.dv"]
    if mode == "ttlc":
        for slot in SLOT_ORDER:
            names += [f"{slot}.p_lk", f"{slot}.p_llc", f"{slot}.p_rlc", f"{slot}.ttlc"]
    elif mode != "base":
        raise ValueError(f"unknown obs_mode {mode!r}")
    return list(enumerate(names))


def compute_reward(events: StepEvents, cfg: RewardConfig) -> float:
    """Terminal goal reward minus lane-change and collision penalties."""
    r = 0.0
    if events.reached_end:
        r += cfg.r_end_of_track
    if events.initiated_lane_change:
        r -= cfg.r_lane_change
    if events.collided:
        r -= cfg.r_collision
    return r


class _Replay:
    """Per-frame numpy views over a TrackSet, built once per track."""

    def __init__(self, ts: TrackSet):
        n = len(ts.vehicles)
        frames = (ts.max_frame or 0) + 1
        self.ids = np.array([v.vehicle_id for v in ts.vehicles], dtype=int)
        self.length = np.array([v.length for v in ts.vehicles])
        self.width = np.array([v.width for v in ts.vehicles])
        self.x = np.zeros((frames, n))
        self.y = np.zeros((frames, n))
        self.vx = np.zeros((frames, n))
        self.lane = np.full((frames, n), -1, dtype=int)
        self.present = np.zeros((frames, n), dtype=bool)
        for j, veh in enumerate(ts.vehicles):
            f0 = veh.first_frame
            for p in veh.points:
                self.x[p.frame, j] = p.x
                self.y[p.frame, j] = p.y
                self.vx[p.frame, j] = p.vx
                self.lane[p.frame, j] = p.lane_id
                self.present[p.frame, j] = True
        self.frames = frames

    @classmethod
    def of(cls, ts: TrackSet) -> "_Replay":
        rep = ts._caches.get("replay")
        if rep is None:
            rep = cls(ts)
            ts._caches["replay"] = rep
        return rep


class HighwayEnv:
    """Single-owner mutable episode state over an immutable TrackSet."""

    def __init__(self, cfg: EnvConfig = EnvConfig(), reward: RewardConfig = RewardConfig(),
                 intention_factory=None):
        self.cfg = cfg
        self.reward_cfg = reward
        if intention_factory is None:
            if cfg.obs_mode == "ttlc":
                intention_factory = lambda ts: GroundTruthProvider(ts, cfg.intention_horizon)
            else:
                intention_factory = lambda ts: NoIntention(cfg.intention_horizon)
        self._intention_factory = intention_factory
        self._providers: dict[str, IntentionProvider] = {}
        self.ts: TrackSet | None = None
        self.done = True
        self.outcome = "running"

    # -- episode control -----------------------------------------------------

    def reset(self, ts: TrackSet, spawn: SpawnConfig, seed: int) -> Observation:
        self.ts = ts
        self._replay = _Replay.of(ts)
        self._provider = self._providers.get(ts.track_id)
        if self._provider is None:
            self._provider = self._intention_factory(ts)
            self._providers[ts.track_id] = self._provider
        self._frame = 0
        self.done = False
        self.outcome = "running"

        rng = np.random.default_rng(seed)
        geo = ts.geometry
        fixed = spawn.lane is not None and spawn.x is not None and spawn.v is not None
        attempts = 1 if fixed else max(1, spawn.max_retries)
        for _ in range(attempts):
            lane = spawn.lane if spawn.lane is not None else int(rng.integers(0, geo.lane_count))
            x = spawn.x if spawn.x is not None else float(rng.uniform(*spawn.x_range))
            v = spawn.v if spawn.v is not None else float(rng.uniform(*spawn.v_range))
            y = geo.lane_centers[lane]
            if self._occupied(x, y):
                continue
            if not fixed and not self._spawn_margin_ok(x, lane, v):
                continue
            self.ego = EgoState(x=x, y=y, v=v, lane_id=lane)
            return self._observe()
        raise NoFreeSpawn("no collision-free ego placement found")

    def _spawn_margin_ok(self, x: float, lane: int, v: float) -> bool:
        """Reject random spawns that are physically doomed from frame 0."""
        rep = self._replay
        if rep.ids.size == 0:
            return True
        idm = self.cfg.idm
        dx = rep.x[0] - x
        gap = np.abs(dx) - (rep.length + self.cfg.ego_length) / 2.0
        same = rep.present[0] & (rep.lane[0] == lane)
        ahead = same & (dx > 0)
        if ahead.any():
            j = np.nonzero(ahead)[0][np.argmin(dx[ahead])]
            closing = max(0.0, v - rep.vx[0, j])
            if gap[j] < idm.s0 + closing**2 / (2.0 * idm.b_max):
                return False
        behind = same & (dx <= 0)
        if behind.any():
            j = np.nonzero(behind)[0][np.argmax(dx[behind])]
            closing = max(0.0, rep.vx[0, j] - v)
            if gap[j] < idm.s0 + 2.0 * closing:
                return False
        return True

    def step(self, action: Action) -> StepResult:
        """Advance one decision interval; see the module docstring for the MDP."""
        if self.done:
            raise EpisodeDone("step() called on a finished episode")
        cfg = self.cfg
        initiated = False
        masked = False
        act = Action(action)
        if act != Action.LK:
            if self.ego.lane_change is not None:
                masked = True  # mid-manoeuvre commands are ignored
            else:
                direction = 1 if act == Action.LLC else -1
                target = self.ego.lane_id + direction
                if 0 <= target < self.ts.geometry.lane_count:
                    self.ego.lane_change = (direction, 0.0, self.ego.lane_id)
                    initiated = True
                else:
                    masked = True  # edge-lane no-op

        collided = False
        reached_end = False
        for _ in range(cfg.substeps):
            if self._data_exhausted():
                self.done = True
                self.outcome = "truncated"
                break
            self._frame += 1
            self._advance_ego()
            if self._occupied(self.ego.x, self.ego.y):
                collided = True
                self.done = True
                self.outcome = "collision"
                break
            if self.ego.x >= self.ts.geometry.track_length:
                reached_end = True
                self.done = True
                self.outcome = "end_of_track"
                break

        events = StepEvents(
            reached_end=reached_end,
            initiated_lane_change=initiated or (masked and cfg.penalize_masked_actions),
            collided=collided,
        )
        return StepResult(self._observe(), compute_reward(events, self.reward_cfg),
                          self.done, self.outcome)

    # -- internals -------------------------------------------------------------

    def _data_exhausted(self) -> bool:
        max_frame = self.ts.max_frame
        return max_frame is not None and self._frame + 1 > max_frame

    def _occupied(self, ex: float, ey: float) -> bool:
        rep = self._replay
        frame = self._frame
        if frame >= rep.frames or rep.ids.size == 0:
            return False
        mask = rep.present[frame]
        if not mask.any():
            return False
        cfg = self.cfg
        hit = (
            mask
            & (np.abs(rep.x[frame] - ex) < (rep.length + cfg.ego_length) / 2.0)
            & (np.abs(rep.y[frame] - ey) < (rep.width + cfg.ego_width) / 2.0)
        )
        return bool(hit.any())

    def _effective_lane(self) -> int:
        ego = self.ego
        if ego.lane_change is None:
            return ego.lane_id
        direction, progress, source = ego.lane_change
        return source + direction if progress > 0.5 else source

    def _leader(self, lane: int):
        """(bumper gap, leader speed) in `lane`, or free-road defaults."""
        rep = self._replay
        frame = self._frame
        cfg = self.cfg
        if frame >= rep.frames or rep.ids.size == 0:
            return FREE_ROAD_GAP, 0.0
        dx = rep.x[frame] - self.ego.x
        gap = dx - (rep.length + cfg.ego_length) / 2.0
        ok = rep.present[frame] & (rep.lane[frame] == lane) & (dx > 0.0) & (gap > 0.0) \
            & (dx <= cfg.radar_range)
        if not ok.any():
            return FREE_ROAD_GAP, 0.0
        j = np.nonzero(ok)[0][np.argmin(dx[ok])]
        return float(gap[j]), float(rep.vx[frame, j])

    def _advance_ego(self):
        cfg = self.cfg
        dt = cfg.physics_dt
        ego = self.ego
        gap, v_lead = self._leader(self._effective_lane())
        a = acceleration(ego.v, gap, v_lead, cfg.idm)
        ego.v = max(0.0, ego.v + a * dt)
        ego.x += ego.v * dt

        if ego.lane_change is not None:
            direction, progress, source = ego.lane_change
            progress = min(1.0, progress + dt / cfg.lane_change_duration)
            geo = self.ts.geometry
            src_y = geo.lane_centers[source]
            tgt_y = geo.lane_centers[source + direction]
            ego.y = src_y + (tgt_y - src_y) * progress
            if progress >= 1.0 - 1e-12:
                ego.lane_id = source + direction
                ego.y = tgt_y
                ego.lane_change = None
            else:
                ego.lane_change = (direction, progress, source)
                ego.lane_id = source + direction if progress > 0.5 else source

    # -- observation -------------------------------------------------------------

    def neighbors(self) -> list[NeighborSlot]:
        """Nearest lead/rear vehicle per lane (ego, left, right) within radar range."""
        rep = self._replay
        frame = self._frame
        cfg = self.cfg
        geo = self.ts.geometry
        ego_lane = self._effective_lane()
        horizon = cfg.intention_horizon
        t_now = frame * self.ts.dt

        lanes = {"same": ego_lane, "left": ego_lane + 1, "right": ego_lane - 1}
        slots = []
        in_frame = frame < rep.frames and rep.ids.size > 0
        for slot in SLOT_ORDER:
            side, kind = slot.rsplit("_", 1)
            lane = lanes[side]
            chosen = None
            if 0 <= lane < geo.lane_count and in_frame:
                dx = rep.x[frame] - self.ego.x
                ok = rep.present[frame] & (rep.lane[frame] == lane) & (np.abs(dx) <= cfg.radar_range)
                ok &= (dx >= 0.0) if kind == "lead" else (dx < 0.0)
                if ok.any():
                    idxs = np.nonzero(ok)[0]
                    # nearest by |dx|, ties to the lower vehicle id
                    order = np.lexsort((rep.ids[idxs], np.abs(dx[idxs])))
                    chosen = idxs[order[0]]
            if chosen is None:
                sentinel_dx = cfg.radar_range if kind == "lead" else -cfg.radar_range
                slots.append(NeighborSlot(slot, False, sentinel_dx, 0.0, lane_keep(horizon)))
            else:
                intent = self._provider.intention(int(rep.ids[chosen]), t_now)
                slots.append(NeighborSlot(
                    slot, True,
                    float(rep.x[frame, chosen] - self.ego.x),
                    float(rep.vx[frame, chosen] - self.ego.v),
                    intent,
                ))
        return slots

    def encode_observation(self, slots: list[NeighborSlot], ego: EgoState) -> Observation:
        cfg = self.cfg
        v_des = cfg.idm.v_desired
        features = np.zeros(cfg.obs_length)
        features[ego.lane_id] = 1.0
        features[3] = min(1.0, ego.v / v_des)
        for i, slot in enumerate(slots):
            base = 4 + 3 * i
            features[base] = 1.0 if slot.present else 0.0
            features[base + 1] = np.clip(slot.dx / cfg.radar_range, -1.0, 1.0)
            features[base + 2] = np.clip(slot.dv / v_des, -1.0, 1.0)
        if cfg.obs_mode == "ttlc":
            horizon = cfg.intention_horizon
            for i, slot in enumerate(slots):
                base = BASE_LENGTH + 4 * i
                it = slot.intention
                features[base] = it.p_lk
                features[base + 1] = it.p_llc
                features[base + 2] = it.p_rlc
                features[base + 3] = np.clip(it.ttlc / horizon, 0.0, 1.0)
        return Observation(features, cfg.layout_version)

    def _observe(self) -> Observation:
        return self.encode_observation(self.neighbors(), self.ego)
