import math

import numpy as np
import pytest

from highway_dqn.intention import (
    DegradedProvider,
    GroundTruthProvider,
    Intention,
    NoIntention,
    NoiseConfig,
    TimeOutOfRange,
    UnknownVehicle,
    degrade,
    ground_truth_ttlc,
    lane_keep,
)
from highway_dqn.synth import SynthConfig, generate_synthetic
from highway_dqn.tracks import LaneGeometry, TrackPoint, TrackSet, VehicleTrack

GEO = LaneGeometry()


def make_track(lane_per_frame, vid=1, dt=0.1, first_frame=0):
    pts = []
    for i, lane in enumerate(lane_per_frame):
        y = GEO.lane_centers[lane]
        pts.append(TrackPoint(first_frame + i, 10.0 + 2.0 * i, y, 20.0, 0.0, lane))
    return TrackSet(GEO, dt, (VehicleTrack(vid, 5.0, 2.0, tuple(pts)),))


def brute_force_intention(ts, vid, t, horizon=5.0):
    """Independent reference: dict lookup over absolute frames."""
    veh = ts.vehicle(vid)
    lanes = {p.frame: p.lane_id for p in veh.points}
    f = math.floor(t / ts.dt + 1e-9)
    assert f in lanes
    lane0 = lanes[f]
    f += 1
    while f * ts.dt <= t + horizon + 1e-9 and f in lanes:
        if lanes[f] != lane0:
            delta = min(horizon, max(0.0, f * ts.dt - t))
            if lanes[f] > lane0:
                return Intention(0.0, 1.0, 0.0, delta, horizon)
            return Intention(0.0, 0.0, 1.0, delta, horizon)
        f += 1
    return lane_keep(horizon)


def test_never_changes():
    ts = make_track([1] * 80)
    out = ground_truth_ttlc(ts, 1, 1.0)
    assert (out.p_lk, out.p_llc, out.p_rlc) == (1.0, 0.0, 0.0)
    assert out.ttlc == 5.0


def test_left_change_at_2_4_seconds():
    # lane flips at frame 34 = 3.4 s; queried from t=1.0 s
    ts = make_track([0] * 34 + [1] * 40)
    out = ground_truth_ttlc(ts, 1, 1.0)
    assert (out.p_lk, out.p_llc, out.p_rlc) == (0.0, 1.0, 0.0)
    assert out.ttlc == pytest.approx(2.4, abs=1e-9)


def test_first_change_wins():
    # right change after 1 s, then back left after 3 s
    ts = make_track([1] * 10 + [0] * 20 + [1] * 40)
    out = ground_truth_ttlc(ts, 1, 0.0)
    assert (out.p_lk, out.p_llc, out.p_rlc) == (0.0, 0.0, 1.0)
    assert out.ttlc == pytest.approx(1.0, abs=1e-9)


def test_change_beyond_horizon_is_lane_keep():
    ts = make_track([0] * 60 + [1] * 20)
    out = ground_truth_ttlc(ts, 1, 0.0)  # flip at 6.0 s > horizon
    assert out.p_lk == 1.0
    assert out.ttlc == 5.0


def test_data_ending_early_is_lane_keep():
    ts = make_track([0] * 20)
    out = ground_truth_ttlc(ts, 1, 1.0)
    assert out.p_lk == 1.0


def test_errors():
    ts = make_track([0] * 20)
    with pytest.raises(UnknownVehicle):
        ground_truth_ttlc(ts, 99, 0.0)
    with pytest.raises(TimeOutOfRange):
        ground_truth_ttlc(ts, 1, 5.0)


def test_monotonic_countdown():
    ts = make_track([0] * 40 + [1] * 40)  # flip at 4.0 s
    prev = None
    for t in np.arange(0.0, 4.0, 0.5):
        out = ground_truth_ttlc(ts, 1, float(t))
        assert out.ttlc == pytest.approx(4.0 - t, abs=1e-9)
        if prev is not None:
            assert prev - out.ttlc == pytest.approx(0.5, abs=1e-9)
        prev = out.ttlc


def test_oracle_matches_brute_force_on_synthetic_tracks():
    cfg = SynthConfig(vehicle_count=8, duration_s=30.0, random_lane_changes=3)
    for seed in range(5):
        ts = generate_synthetic(cfg, seed=seed)
        for veh in ts.vehicles:
            t0 = veh.first_frame * ts.dt
            t1 = veh.last_frame * ts.dt
            for t in np.arange(t0, t1 + 1e-9, 1.0):
                a = ground_truth_ttlc(ts, veh.vehicle_id, float(t))
                b = brute_force_intention(ts, veh.vehicle_id, float(t))
                assert (a.p_lk, a.p_llc, a.p_rlc) == (b.p_lk, b.p_llc, b.p_rlc)
                assert a.ttlc == pytest.approx(b.ttlc, abs=1e-9)


def test_intention_invariants():
    with pytest.raises(ValueError):
        Intention(0.5, 0.4, 0.4, 5.0)
    with pytest.raises(ValueError):
        Intention(1.0, 0.0, 0.0, 7.0, horizon=5.0)


def test_degrade_identity():
    intent = Intention(0.0, 1.0, 0.0, 2.5)
    out = degrade(intent, NoiseConfig(), np.random.default_rng(0))
    assert out == intent


def test_degrade_forced_flip_never_lane_keep():
    cfg = NoiseConfig(class_flip_rate=1.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        out = degrade(lane_keep(), cfg, rng)
        assert out.argmax_class != "lk"
        assert out.p_lk + out.p_llc + out.p_rlc == pytest.approx(1.0, abs=1e-12)


def test_degrade_flip_frequency_binomial():
    cfg = NoiseConfig(class_flip_rate=0.2)
    rng = np.random.default_rng(123)
    base = Intention(0.0, 1.0, 0.0, 2.0)
    n = 10_000
    flips = sum(degrade(base, cfg, rng).argmax_class != "llc" for _ in range(n))
    assert abs(flips / n - 0.2) < 0.012  # 3 sigma binomial band


def test_degrade_ttlc_noise_clamped():
    cfg = NoiseConfig(ttlc_sigma=3.0)
    rng = np.random.default_rng(7)
    base = Intention(0.0, 0.0, 1.0, 1.0)
    for _ in range(500):
        out = degrade(base, cfg, rng)
        assert 0.0 <= out.ttlc <= out.horizon


def test_degrade_lane_keep_keeps_horizon_ttlc():
    cfg = NoiseConfig(ttlc_sigma=2.0)
    rng = np.random.default_rng(7)
    out = degrade(lane_keep(), cfg, rng)
    assert out.ttlc == out.horizon


def test_providers():
    ts = make_track([0] * 34 + [1] * 40)
    gt = GroundTruthProvider(ts)
    assert gt.intention(1, 1.0).ttlc == pytest.approx(2.4, abs=1e-9)
    assert gt.intention(1, 1.0) is gt.intention(1, 1.0)  # cached

    none = NoIntention()
    assert none.intention(123, 0.0).p_lk == 1.0

    deg = DegradedProvider(ts, NoiseConfig(class_flip_rate=0.5, ttlc_sigma=1.0, seed=9))
    first = deg.intention(1, 1.0)
    again = deg.intention(1, 1.0)
    assert first == again  # same situation, same emulated mistake
    deg2 = DegradedProvider(ts, NoiseConfig(class_flip_rate=0.5, ttlc_sigma=1.0, seed=9))
    assert deg2.intention(1, 1.0) == first  # order-independent derivation
