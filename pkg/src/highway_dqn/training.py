"""Episode loop: experience collection, replay updates, target syncing, metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import DqnAgent, Transition, epsilon_schedule

METRICS_HEADER = "episode,score,mean_loss,epsilon,collision,steps"


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; training state is not worth keeping."""


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    score: float
    mean_loss: float
    epsilon: float
    collision: bool
    steps: int


class MetricsWriter:
    """Per-episode CSV sink with the run configuration echoed as comments."""

    def __init__(self, fh, config_echo: dict | None = None):
        self._fh = fh
        for key in sorted(config_echo or {}):
            fh.write(f"# {key} = {config_echo[key]}\n")
        fh.write(METRICS_HEADER + "\n")

    def __call__(self, rec: EpisodeRecord):
        self._fh.write(
            f"{rec.episode},{rec.score!r},{rec.mean_loss!r},{rec.epsilon!r},"
            f"{int(rec.collision)},{rec.steps}\n"
        )


def run_training(env_factory, agent: DqnAgent, episodes: int, sink=None,
                 inject_nan_at_step: int | None = None) -> DqnAgent:
    """Train for `episodes` episodes of the factory's environments.

    env_factory(episode_index) must return a (env, initial_observation) pair
    with the episode already started. Deterministic given the agent seed and
    whatever seeds the factory uses internally.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    if len(agent.bank) == 0:
        agent.sync_target()
    global_step = 0
    for episode in range(episodes):
        eps = epsilon_schedule(episode, agent.cfg)
        env, obs = env_factory(episode)
        losses = []
        score = 0.0
        steps = 0
        outcome = "running"
        done = False
        while not done:
            action = agent.act(obs, eps)
            res = env.step(action)
            terminal = res.outcome in ("collision", "end_of_track")
            agent.buffer.push(Transition(obs, action, res.reward, res.observation, terminal))
            score += res.reward
            steps += 1
            global_step += 1
            obs = res.observation
            done = res.done
            outcome = res.outcome
            if len(agent.buffer) >= agent.cfg.batch_size:
                loss = agent.learn()
                if inject_nan_at_step is not None and global_step >= inject_nan_at_step:
                    loss = float("nan")
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at step {global_step}")
                losses.append(loss)
            if global_step % agent.cfg.target_sync_interval == 0:
                agent.sync_target()
        record = EpisodeRecord(
            episode=episode,
            score=score,
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
            epsilon=eps,
            collision=outcome == "collision",
            steps=steps,
        )
        if sink is not None:
            sink(record)
    return agent
