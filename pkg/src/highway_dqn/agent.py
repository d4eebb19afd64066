"""Replay buffer, target bank and the five Q-learning variants.

Variants share one training path; they differ only in how the bootstrap
target is computed (double: online argmax, averaged: mean over the target
snapshot bank) or in the network structure (duelling head, noisy layers).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .env import Observation
from .net import Network
from .optim import Adam

VARIANTS = ("dqn", "double", "averaged", "duelling", "noisy")


class BufferTooSmall(RuntimeError):
    pass


class EmptyBank(RuntimeError):
    pass


@dataclass(frozen=True)
class Transition:
    s: Observation
    a: int
    r: float
    s_next: Observation
    terminal: bool


class ReplayBuffer:
    """FIFO ring with uniform sampling."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._storage: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._storage)

    def push(self, tr: Transition):
        if len(self._storage) < self.capacity:
            self._storage.append(tr)
        else:
            self._storage[self._next] = tr
        self._next = (self._next + 1) % self.capacity

    def __iter__(self):
        """Iterate in insertion order, oldest first."""
        if len(self._storage) < self.capacity:
            yield from self._storage
        else:
            yield from self._storage[self._next:]
            yield from self._storage[: self._next]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if len(self._storage) < batch_size:
            raise BufferTooSmall(f"buffer holds {len(self._storage)} < batch {batch_size}")
        idxs = rng.choice(len(self._storage), size=batch_size, replace=False)
        return [self._storage[i] for i in idxs]


class TargetBank:
    """Up to `capacity` frozen network snapshots, newest first."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._snaps: list[Network] = []

    def __len__(self):
        return len(self._snaps)

    def push(self, net: Network):
        self._snaps.insert(0, net.clone())
        del self._snaps[self.capacity:]

    @property
    def newest(self) -> Network:
        if not self._snaps:
            raise EmptyBank("no target snapshot; call sync_target first")
        return self._snaps[0]

    @property
    def snapshots(self) -> list[Network]:
        if not self._snaps:
            raise EmptyBank("no target snapshot; call sync_target first")
        return list(self._snaps)


@dataclass(frozen=True)
class AgentConfig:
    variant: str = "dqn"
    gamma: float = 0.95
    alpha: float = 1e-5
    eps_start: float = 1.0
    eps_min: float = 0.01
    eps_decay: float = 0.9995
    batch_size: int = 32
    buffer_capacity: int = 10_000
    target_sync_interval: int = 1000
    averaged_k: int = 5
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "relu"
    noisy_all_layers: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.eps_min > self.eps_start:
            raise ValueError("eps_min must not exceed eps_start")
        if self.averaged_k < 1:
            raise ValueError("averaged_k must be at least 1")


def build_network(cfg: AgentConfig, input_dim: int, rng: np.random.Generator) -> Network:
    return Network(
        input_dim,
        cfg.hidden,
        3,
        head="duelling" if cfg.variant == "duelling" else "plain",
        noisy=cfg.variant == "noisy",
        noisy_all=cfg.noisy_all_layers,
        activation=cfg.activation,
        rng=rng,
    )


def epsilon_schedule(episode: int, cfg: AgentConfig) -> float:
    return max(cfg.eps_min, cfg.eps_start * cfg.eps_decay**episode)


def select_action(obs: Observation, eps: float, net: Network, rng: np.random.Generator) -> int:
    """Epsilon-greedy; noisy nets explore by resampling their noise instead."""
    if net.has_noisy:
        net.sample_noise(rng)
        eps = 0.0
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(0, 3))
    q = net.forward(obs.features)
    return int(np.argmax(q))  # ties break to the lowest index


def greedy_action(obs: Observation, net: Network) -> int:
    """Deterministic evaluation policy: no exploration, no noise resampling."""
    return int(np.argmax(net.forward(obs.features)))


def compute_targets(batch: list[Transition], variant: str, online: Network,
                    bank: TargetBank, gamma: float) -> np.ndarray:
    """Bootstrap target y per transition; terminal rows are just the reward."""
    y = np.array([tr.r for tr in batch])
    live = [i for i, tr in enumerate(batch) if not tr.terminal]
    if not live:
        return y
    s_next = np.stack([batch[i].s_next.features for i in live])
    if variant == "double":
        a_star = np.argmax(online.forward(s_next), axis=1)
        q_next = bank.newest.forward(s_next)[np.arange(len(live)), a_star]
    elif variant == "averaged":
        snaps = bank.snapshots
        q_mean = snaps[0].forward(s_next)
        for snap in snaps[1:]:
            q_mean = q_mean + snap.forward(s_next)
        q_mean = q_mean / len(snaps)
        q_next = q_mean.max(axis=1)
    else:  # dqn, duelling, noisy: plain max over the newest snapshot
        q_next = bank.newest.forward(s_next).max(axis=1)
    y[live] += gamma * q_next
    return y


class DqnAgent:
    """Online network, optimizer, replay buffer and target bank for one arm."""

    def __init__(self, cfg: AgentConfig, input_dim: int, seed: int):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.online = build_network(cfg, input_dim, np.random.default_rng(seed))
        self.optimizer = Adam(self.online.parameters(), alpha=cfg.alpha)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.bank = TargetBank(cfg.averaged_k)

    def sync_target(self):
        self.bank.push(self.online)

    def act(self, obs: Observation, eps: float) -> int:
        return select_action(obs, eps, self.online, self.rng)

    def learn(self) -> float:
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        return train_step(self, batch)


def train_step(agent: DqnAgent, batch: list[Transition]) -> float:
    """One gradient step on the mean squared error against the variant target.

    The gradient flows only through the Q output of the action actually
    taken in each transition.
    """
    cfg = agent.cfg
    net = agent.online
    if net.has_noisy:
        net.sample_noise(agent.rng)
    y = compute_targets(batch, cfg.variant, net, agent.bank, cfg.gamma)
    s = np.stack([tr.s.features for tr in batch])
    actions = np.array([tr.a for tr in batch])
    q = net.forward(s)
    q_taken = q[np.arange(len(batch)), actions]
    err = q_taken - y
    loss = float(np.mean(err**2))
    grad_out = np.zeros_like(q)
    grad_out[np.arange(len(batch)), actions] = 2.0 * err / len(batch)
    grads = net.backward(grad_out)
    agent.optimizer.step(grads)
    return loss
