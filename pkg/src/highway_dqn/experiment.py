"""Experiment orchestration: corpora on disk, per-arm training, evaluation, comparison.

An "arm" fixes what the agent observes: `base` sees distances and speeds
only, `ground_truth` adds oracle intention features, `degraded` adds noisy
ones. Arms share track files and episode seeds, so outcome differences are
attributable to the observation layout alone.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .agent import AgentConfig, DqnAgent, greedy_action
from .config import Config, ConfigError
from .env import EnvConfig, HighwayEnv, RewardConfig, SpawnConfig
from .intention import DegradedProvider, GroundTruthProvider, NoIntention, NoiseConfig
from .net import Network
from .seeds import derive_seed
from .synth import LaneChangeEvent, SynthConfig, generate_synthetic
from .tracks import TrackSet, parse_tracks, serialize_tracks
from .training import MetricsWriter, run_training

ARMS = ("base", "ground_truth", "degraded")

RUNS_CSV_HEADER = "run,seed,track_id,outcome,score,steps,collision"
COMPARE_CSV_HEADER = (
    "variant,base_collisions,ground_truth_collisions,ground_truth_improvement_pct,"
    "degraded_collisions,degraded_improvement_pct"
)


class LayoutMismatch(ValueError):
    pass


class MissingBase(ValueError):
    pass


def arm_modes(arm: str) -> tuple[str, str]:
    """(obs_mode, intention_mode) for one experiment arm."""
    if arm == "base":
        return "base", "none"
    if arm == "ground_truth":
        return "ttlc", "ground_truth"
    if arm == "degraded":
        return "ttlc", "degraded"
    raise ConfigError(f"unknown arm {arm!r}; expected one of {ARMS}")


# -- config -> component builders ------------------------------------------------


def parse_events(text: str) -> tuple[LaneChangeEvent, ...]:
    """`vehicle:start_s:direction:duration_s` entries joined by `;`."""
    events = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 4:
            raise ConfigError(f"bad lane_change_event {chunk!r}")
        try:
            events.append(LaneChangeEvent(int(parts[0]), float(parts[1]),
                                          int(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise ConfigError(f"bad lane_change_event {chunk!r}: {exc}") from None
    return tuple(events)


def synth_config(cfg: Config, track_id: str = "synth") -> SynthConfig:
    return SynthConfig(
        geometry=cfg.geometry(),
        dt=cfg.get_float("data.dt"),
        duration_s=cfg.get_float("synth.duration_s"),
        vehicle_count=cfg.get_int("synth.vehicle_count"),
        speed_min=cfg.get_float("synth.speed_min"),
        speed_max=cfg.get_float("synth.speed_max"),
        spawn_rate_per_s=cfg.get_float("synth.spawn_rate_per_s"),
        initial_count=cfg.get_optional_int("synth.initial_count"),
        min_spawn_gap=cfg.get_float("synth.min_spawn_gap"),
        vehicle_length=cfg.get_float("synth.vehicle_length"),
        vehicle_width=cfg.get_float("synth.vehicle_width"),
        lane_change_events=parse_events(cfg["synth.lane_change_events"]),
        random_lane_changes=cfg.get_int("synth.random_lane_changes"),
        random_lc_duration=cfg.get_float("synth.random_lc_duration"),
        idm=cfg.idm(),
        track_id=track_id,
    )


def env_config(cfg: Config, obs_mode: str) -> EnvConfig:
    return EnvConfig(
        decision_interval=cfg.get_float("env.decision_interval"),
        physics_dt=cfg.get_float("env.physics_dt"),
        lane_change_duration=cfg.get_float("env.lane_change_duration"),
        radar_range=cfg.get_float("env.radar_range"),
        obs_mode=obs_mode,
        penalize_masked_actions=cfg.get_bool("env.penalize_masked_actions"),
        ego_length=cfg.get_float("env.ego_length"),
        ego_width=cfg.get_float("env.ego_width"),
        intention_horizon=cfg.get_float("intention.horizon"),
        idm=cfg.idm(),
    )


def reward_config(cfg: Config) -> RewardConfig:
    return RewardConfig(
        r_end_of_track=cfg.get_float("reward.r_end_of_track"),
        r_lane_change=cfg.get_float("reward.r_lane_change"),
        r_collision=cfg.get_float("reward.r_collision"),
    )


def agent_config(cfg: Config, variant: str) -> AgentConfig:
    hidden = tuple(int(h) for h in cfg.get_list("net.hidden"))
    return AgentConfig(
        variant=variant,
        gamma=cfg.get_float("agent.gamma"),
        alpha=cfg.get_float("agent.alpha"),
        eps_start=cfg.get_float("agent.eps_start"),
        eps_min=cfg.get_float("agent.eps_min"),
        eps_decay=cfg.get_float("agent.eps_decay"),
        batch_size=cfg.get_int("agent.batch_size"),
        buffer_capacity=cfg.get_int("agent.buffer_capacity"),
        target_sync_interval=cfg.get_int("agent.target_sync_interval"),
        averaged_k=cfg.get_int("agent.averaged_k"),
        hidden=hidden,
        activation=cfg["net.activation"],
        noisy_all_layers=cfg.get_bool("net.noisy_all_layers"),
    )


def spawn_config(cfg: Config) -> SpawnConfig:
    return SpawnConfig(
        lane=cfg.get_optional_int("spawn.lane"),
        x=cfg.get_optional_float("spawn.x"),
        v=cfg.get_optional_float("spawn.v"),
        x_range=(cfg.get_float("spawn.x_min"), cfg.get_float("spawn.x_max")),
        v_range=(cfg.get_float("spawn.v_min"), cfg.get_float("spawn.v_max")),
    )


def intention_factory(cfg: Config, mode: str):
    horizon = cfg.get_float("intention.horizon")
    if mode == "none":
        return lambda ts: NoIntention(horizon)
    if mode == "ground_truth":
        return lambda ts: GroundTruthProvider(ts, horizon)
    if mode == "degraded":
        noise = NoiseConfig(
            class_flip_rate=cfg.get_float("intention.class_flip_rate"),
            ttlc_sigma=cfg.get_float("intention.ttlc_sigma"),
            seed=derive_seed(cfg.get_int("experiment.master_seed"), "intent-noise"),
        )
        return lambda ts: DegradedProvider(ts, noise, horizon)
    raise ConfigError(f"unknown intention mode {mode!r}")


def build_env(cfg: Config, arm: str) -> HighwayEnv:
    obs_mode, intent_mode = arm_modes(arm)
    return HighwayEnv(env_config(cfg, obs_mode), reward_config(cfg),
                      intention_factory(cfg, intent_mode))


# -- corpus -----------------------------------------------------------------------


def track_filename(index: int) -> str:
    return f"track_{index:03d}.csv"


def generate_corpus(cfg: Config) -> list[TrackSet]:
    """All tracks for the configured corpus, deterministic in the master seed."""
    master = cfg.get_int("experiment.master_seed")
    count = cfg.get_int("synth.track_count")
    tracks = []
    for i in range(count):
        scfg = synth_config(cfg, track_id=f"track_{i:03d}")
        tracks.append(generate_synthetic(scfg, seed=derive_seed(master, "track", i)))
    return tracks


def write_corpus(cfg: Config, tracks: list[TrackSet], out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    master = cfg.get_int("experiment.master_seed")
    for i, ts in enumerate(tracks):
        name = track_filename(i)
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(serialize_tracks(ts))
        entries.append({
            "id": ts.track_id,
            "file": name,
            "seed": derive_seed(master, "track", i),
            "vehicles": len(ts.vehicles),
        })
    manifest = {
        "seed_scheme": "sha256(master/track/<index>), first 8 bytes little-endian",
        "config": cfg.raw(),
        "tracks": entries,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_corpus(cfg: Config, tracks_dir, ids: list[int]) -> list[TrackSet]:
    geometry = cfg.geometry()
    dt = cfg.get_float("data.dt")
    out = []
    for i in ids:
        path = os.path.join(tracks_dir, track_filename(i))
        with open(path, encoding="utf-8") as fh:
            out.append(parse_tracks(fh.read(), geometry, dt, track_id=f"track_{i:03d}"))
    return out


# -- training ----------------------------------------------------------------------


def run_name(variant: str, arm: str, seed: int) -> str:
    return f"{variant}_{arm}_seed{seed}"


def episode_factory(env: HighwayEnv, tracks: list[TrackSet], spawn: SpawnConfig,
                    master: int, exp_seed: int):
    """Round-robin tracks; episode seeds shared across arms and variants."""

    def factory(episode: int):
        ts = tracks[episode % len(tracks)]
        seed = derive_seed(master, "train-episode", exp_seed, episode)
        return env, env.reset(ts, spawn, seed)

    return factory


def train_arm(cfg: Config, variant: str, arm: str, exp_seed: int,
              tracks: list[TrackSet], metrics_fh=None) -> DqnAgent:
    master = cfg.get_int("experiment.master_seed")
    env = build_env(cfg, arm)
    acfg = agent_config(cfg, variant)
    agent = DqnAgent(acfg, env.cfg.obs_length,
                     seed=derive_seed(master, "agent", variant, exp_seed))
    sink = None
    if metrics_fh is not None:
        echo = dict(cfg.raw())
        echo.update({"run.variant": variant, "run.arm": arm, "run.seed": str(exp_seed),
                     "run.obs_length": str(env.cfg.obs_length)})
        sink = MetricsWriter(metrics_fh, echo)
    factory = episode_factory(env, tracks, spawn_config(cfg), master, exp_seed)
    run_training(
        factory, agent, cfg.get_int("experiment.episodes"), sink,
        inject_nan_at_step=cfg.get_optional_int("train.nan_injection_step"),
    )
    return agent


def save_checkpoint(agent: DqnAgent, env: HighwayEnv, variant: str, arm: str,
                    exp_seed: int, path):
    agent.online.save(path, extra={
        "variant": variant,
        "arm": arm,
        "obs_mode": env.cfg.obs_mode,
        "layout_version": env.cfg.layout_version,
        "seed": exp_seed,
    })


# -- evaluation ---------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRun:
    run: int
    seed: int
    track_id: str
    outcome: str
    score: float
    steps: int


def eval_env_from_config(cfg: Config) -> HighwayEnv:
    """Evaluation env straight from env.obs_mode / intention.mode keys."""
    return HighwayEnv(env_config(cfg, cfg["env.obs_mode"]), reward_config(cfg),
                      intention_factory(cfg, cfg["intention.mode"]))


def evaluate_net(cfg: Config, net: Network, arm: str, tracks: list[TrackSet],
                 meta: dict | None = None, env: HighwayEnv | None = None) -> dict:
    """Greedy rollouts over the test split, round-robin with per-run seeds.

    Noisy networks are evaluated on their mean weights (noise zeroed).
    The env defaults to the standard one for `arm`.
    """
    if env is None:
        env = build_env(cfg, arm)
    if net.input_dim != env.cfg.obs_length:
        raise LayoutMismatch(
            f"checkpoint expects {net.input_dim} features, configured layout has "
            f"{env.cfg.obs_length}"
        )
    if net.has_noisy:
        net.zero_noise()
    master = cfg.get_int("experiment.master_seed")
    eval_runs = cfg.get_int("experiment.eval_runs")
    spawn = spawn_config(cfg)

    runs: list[EvalRun] = []
    for i in range(eval_runs):
        ts = tracks[i % len(tracks)]
        seed = derive_seed(master, "eval", i)
        obs = env.reset(ts, spawn, seed)
        score = 0.0
        steps = 0
        while True:
            res = env.step(greedy_action(obs, net))
            score += res.reward
            steps += 1
            obs = res.observation
            if res.done:
                runs.append(EvalRun(i, seed, ts.track_id, res.outcome, score, steps))
                break

    outcomes = {key: 0 for key in ("collision", "end_of_track", "truncated")}
    for run in runs:
        outcomes[run.outcome] += 1
    counted = [r for r in runs if r.outcome != "truncated"]  # truncations excluded
    report = {
        "arm": arm,
        "eval_runs": eval_runs,
        "collision_count": outcomes["collision"],
        "counted_runs": len(counted),
        "mean_score": float(np.mean([r.score for r in runs])),
        "outcomes": outcomes,
        "runs": [vars(r) for r in runs],
    }
    report.update(meta or {})
    return report


def runs_csv(report: dict) -> str:
    lines = [RUNS_CSV_HEADER]
    for r in report["runs"]:
        collision = int(r["outcome"] == "collision")
        lines.append(
            f"{r['run']},{r['seed']},{r['track_id']},{r['outcome']},"
            f"{r['score']!r},{r['steps']},{collision}"
        )
    return "\n".join(lines) + "\n"


# -- comparison ----------------------------------------------------------------------


def _improvement(base_mean: float, arm_mean: float) -> float | None:
    if base_mean == 0:
        return None
    return (base_mean - arm_mean) / base_mean * 100.0


def compare_reports(reports: list[dict]) -> dict:
    """Group reports by (variant, arm), average collision counts, rate vs base."""
    groups: dict[tuple[str, str], list[float]] = {}
    for rep in reports:
        variant = rep.get("variant", "unknown")
        arm = rep.get("arm", "unknown")
        groups.setdefault((variant, arm), []).append(float(rep["collision_count"]))

    variants = sorted({v for v, _ in groups})
    if not any(arm == "base" for _, arm in groups):
        raise MissingBase("no report tagged with the base arm")

    rows = []
    for variant in variants:
        base_vals = groups.get((variant, "base"))
        if base_vals is None:
            raise MissingBase(f"variant {variant!r} has no base-arm report")
        base_mean = float(np.mean(base_vals))
        row = {"variant": variant, "base_collisions": base_mean}
        for arm in ("ground_truth", "degraded"):
            vals = groups.get((variant, arm))
            mean = float(np.mean(vals)) if vals else None
            row[f"{arm}_collisions"] = mean
            row[f"{arm}_improvement_pct"] = (
                _improvement(base_mean, mean) if mean is not None else None
            )
        rows.append(row)
    return {"rows": rows}


def _cell(value) -> str:
    if value is None:
        return ""
    return repr(round(value, 6)) if isinstance(value, float) else str(value)


def comparison_csv(comparison: dict) -> str:
    lines = [COMPARE_CSV_HEADER]
    for row in comparison["rows"]:
        lines.append(",".join(_cell(row[k]) for k in (
            "variant", "base_collisions", "ground_truth_collisions",
            "ground_truth_improvement_pct", "degraded_collisions",
            "degraded_improvement_pct",
        )))
    return "\n".join(lines) + "\n"


def comparison_text(comparison: dict) -> str:
    header = f"{'variant':<10} {'base':>8} {'gt-ttlc':>8} {'gt-imp%':>8} {'degr':>8} {'dg-imp%':>8}"
    lines = [header, "-" * len(header)]
    for row in comparison["rows"]:
        def fmt(value):
            return "-" if value is None else f"{value:8.2f}"

        lines.append(
            f"{row['variant']:<10} {fmt(row['base_collisions'])} "
            f"{fmt(row['ground_truth_collisions'])} {fmt(row['ground_truth_improvement_pct'])} "
            f"{fmt(row['degraded_collisions'])} {fmt(row['degraded_improvement_pct'])}"
        )
    return "\n".join(lines) + "\n"
