import io

import numpy as np
import pytest

from mdp import TabularMDP, q_table, value_iteration
from highway_dqn.agent import AgentConfig, DqnAgent
from highway_dqn.env import EnvConfig, HighwayEnv, RewardConfig, SpawnConfig
from highway_dqn.tracks import LaneGeometry, TrackSet
from highway_dqn.training import MetricsWriter, TrainingDiverged, run_training

EMPTY = TrackSet(LaneGeometry(), 0.1, ())


def tabular_agent(seed=0):
    # the one-hot MDP is exactly representable by a linear head; this keeps
    # the oracle check about the training machinery, not approximation noise
    cfg = AgentConfig(variant="dqn", alpha=3e-3, eps_start=1.0, eps_min=1.0,
                      target_sync_interval=50, hidden=(), batch_size=32)
    return DqnAgent(cfg, input_dim=2, seed=seed)


def test_tabular_mdp_converges_to_value_iteration():
    agent = tabular_agent(seed=0)
    mdp = TabularMDP(horizon=40, seed=0)
    run_training(lambda ep: (mdp, mdp.reset()), agent, episodes=250)  # 10^4 steps
    q_star = value_iteration(gamma=agent.cfg.gamma)
    assert np.abs(q_table(agent.online) - q_star).max() < 1e-2


def empty_road_factory(env, seed):
    spawn = SpawnConfig(lane=1, x=0.0, v=25.0)

    def factory(episode):
        obs = env.reset(EMPTY, spawn, seed=seed + episode)
        return env, obs

    return factory


def test_run_training_emits_metrics_rows():
    env = HighwayEnv(EnvConfig(), RewardConfig())
    agent = DqnAgent(AgentConfig(hidden=(8, 8)), input_dim=22, seed=0)
    records = []
    run_training(empty_road_factory(env, 0), agent, episodes=3, sink=records.append)
    assert [r.episode for r in records] == [0, 1, 2]
    assert all(r.steps > 0 for r in records)
    assert all(np.isfinite(r.score) for r in records)


def test_run_training_determinism_metrics_bytes():
    def run_once():
        env = HighwayEnv(EnvConfig(), RewardConfig())
        agent = DqnAgent(AgentConfig(hidden=(8, 8), eps_decay=0.9), input_dim=22, seed=7)
        out = io.StringIO()
        sink = MetricsWriter(out, {"agent.variant": "dqn", "train.episodes": 5})
        run_training(empty_road_factory(env, 3), agent, episodes=5, sink=sink)
        return out.getvalue()

    first, second = run_once(), run_once()
    assert first == second
    assert first.startswith("# agent.variant = dqn\n# train.episodes = 5\n")
    assert "episode,score,mean_loss,epsilon,collision,steps" in first
    assert len([l for l in first.splitlines() if not l.startswith("#")]) == 6


def test_nan_injection_raises_diverged():
    env = HighwayEnv(EnvConfig(), RewardConfig())
    agent = DqnAgent(AgentConfig(hidden=(8, 8)), input_dim=22, seed=0)
    with pytest.raises(TrainingDiverged):
        run_training(empty_road_factory(env, 0), agent, episodes=10, inject_nan_at_step=40)


def test_requires_positive_episode_count():
    env = HighwayEnv(EnvConfig(), RewardConfig())
    agent = DqnAgent(AgentConfig(), input_dim=22, seed=0)
    with pytest.raises(ValueError):
        run_training(empty_road_factory(env, 0), agent, episodes=0)
