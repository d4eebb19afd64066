"""Manoeuvre intention: lane-change class probabilities plus time-to-lane-change.

The ground-truth oracle looks ahead in the replayed trajectory for the next
lane_id change within the horizon. A configurable degradation model emulates
an imperfect learned predictor on top of it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeds import derive_seed
from .tracks import TrackSet

DEFAULT_HORIZON = 5.0


class UnknownVehicle(KeyError):
    def __init__(self, vehicle_id: int):
        super().__init__(f"no vehicle {vehicle_id} in track set")
        self.vehicle_id = vehicle_id


class TimeOutOfRange(ValueError):
    def __init__(self, vehicle_id: int, t: float):
        super().__init__(f"vehicle {vehicle_id} has no data at t={t:.3f}s")
        self.vehicle_id = vehicle_id
        self.t = t


@dataclass(frozen=True)
class Intention:
    """Class probabilities over {lane-keep, left change, right change} and TTLC."""

    p_lk: float
    p_llc: float
    p_rlc: float
    ttlc: float
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        total = self.p_lk + self.p_llc + self.p_rlc
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"class probabilities sum to {total}, not 1")
        if not 0.0 <= self.ttlc <= self.horizon:
            raise ValueError(f"ttlc {self.ttlc} outside [0, {self.horizon}]")

    @property
    def argmax_class(self) -> str:
        probs = {"lk": self.p_lk, "llc": self.p_llc, "rlc": self.p_rlc}
        return max(probs, key=probs.get)


def lane_keep(horizon: float = DEFAULT_HORIZON) -> Intention:
    return Intention(1.0, 0.0, 0.0, horizon, horizon)


@dataclass(frozen=True)
class NoiseConfig:
    class_flip_rate: float = 0.0
    ttlc_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.class_flip_rate <= 1.0:
            raise ValueError("class_flip_rate must be within [0, 1]")
        if self.ttlc_sigma < 0.0:
            raise ValueError("ttlc_sigma must be non-negative")


def ground_truth_ttlc(ts: TrackSet, vehicle_id: int, t: float,
                      horizon: float = DEFAULT_HORIZON) -> Intention:
    """Look-ahead oracle over the replayed trajectory.

    Scans [t, t+horizon] for the first frame whose lane_id differs from the
    lane at the query time; the crossing direction gets probability 1 and
    ttlc is the (continuous) time until that frame. No change found, or the
    data ending first, means pure lane-keep with ttlc = horizon.
    """
    veh = ts.vehicle(vehicle_id)
    if veh is None:
        raise UnknownVehicle(vehicle_id)
    frame0 = int(np.floor(t / ts.dt + 1e-9))
    if not veh.first_frame <= frame0 <= veh.last_frame:
        raise TimeOutOfRange(vehicle_id, t)

    lanes = veh.lane_ids
    i0 = frame0 - veh.first_frame
    lane_now = lanes[i0]
    last = min(len(lanes) - 1, i0 + int(np.ceil(horizon / ts.dt + 1e-9)))
    for i in range(i0 + 1, last + 1):
        if lanes[i] != lane_now:
            delta = (i + veh.first_frame) * ts.dt - t
            if delta > horizon:
                break
            delta = min(horizon, max(0.0, delta))
            if lanes[i] > lane_now:
                return Intention(0.0, 1.0, 0.0, delta, horizon)
            return Intention(0.0, 0.0, 1.0, delta, horizon)
    return lane_keep(horizon)


def degrade(intent: Intention, cfg: NoiseConfig, rng: np.random.Generator) -> Intention:
    """Emulate an imperfect predictor.

    With probability class_flip_rate the argmax class is reassigned uniformly
    to one of the other two (soft labels 0.8/0.1/0.1); ttlc gets zero-mean
    Gaussian noise clamped to [0, horizon]. A lane-keep outcome always
    carries ttlc = horizon.
    """
    flip = rng.random() < cfg.class_flip_rate
    noise = rng.normal(0.0, cfg.ttlc_sigma) if cfg.ttlc_sigma > 0 else 0.0

    classes = ["lk", "llc", "rlc"]
    winner = intent.argmax_class
    if flip:
        others = [c for c in classes if c != winner]
        winner = others[int(rng.integers(0, 2))]
        probs = {c: 0.1 for c in classes}
        probs[winner] = 0.8
    else:
        if cfg.ttlc_sigma <= 0:
            return intent
        probs = {"lk": intent.p_lk, "llc": intent.p_llc, "rlc": intent.p_rlc}

    if winner == "lk":
        ttlc = intent.horizon
    else:
        ttlc = float(np.clip(intent.ttlc + noise, 0.0, intent.horizon))
    return Intention(probs["lk"], probs["llc"], probs["rlc"], ttlc, intent.horizon)


class IntentionProvider:
    """Hook point for the environment; swap in a learned predictor later."""

    def intention(self, vehicle_id: int, t: float) -> Intention:
        raise NotImplementedError


class NoIntention(IntentionProvider):
    """Always lane-keep; used when the observation layout carries no intention."""

    def __init__(self, horizon: float = DEFAULT_HORIZON):
        self._blank = lane_keep(horizon)

    def intention(self, vehicle_id: int, t: float) -> Intention:
        return self._blank


class GroundTruthProvider(IntentionProvider):
    def __init__(self, ts: TrackSet, horizon: float = DEFAULT_HORIZON):
        self.ts = ts
        self.horizon = horizon
        self._cache: dict[tuple[int, int], Intention] = {}

    def intention(self, vehicle_id: int, t: float) -> Intention:
        # background traffic never reacts to the ego, so (vehicle, frame)
        # fully determines the answer and caching is sound
        key = (vehicle_id, int(np.floor(t / self.ts.dt + 1e-9)))
        hit = self._cache.get(key)
        if hit is None:
            hit = ground_truth_ttlc(self.ts, vehicle_id, t, self.horizon)
            self._cache[key] = hit
        return hit


class DegradedProvider(IntentionProvider):
    """Ground truth passed through the noise model.

    Noise is drawn from a seed derived per (track, vehicle, frame), so the
    emulated predictor makes the same mistake every time it sees the same
    situation, regardless of query order.
    """

    def __init__(self, ts: TrackSet, cfg: NoiseConfig, horizon: float = DEFAULT_HORIZON):
        self.base = GroundTruthProvider(ts, horizon)
        self.cfg = cfg
        self._cache: dict[tuple[int, int], Intention] = {}

    def intention(self, vehicle_id: int, t: float) -> Intention:
        frame = int(np.floor(t / self.base.ts.dt + 1e-9))
        key = (vehicle_id, frame)
        hit = self._cache.get(key)
        if hit is None:
            rng = np.random.default_rng(
                derive_seed(self.cfg.seed, "intent", self.base.ts.track_id, vehicle_id, frame)
            )
            hit = degrade(self.base.intention(vehicle_id, t), self.cfg, rng)
            self._cache[key] = hit
        return hit
