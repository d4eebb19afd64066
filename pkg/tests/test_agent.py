import numpy as np
import pytest
from scipy import stats

from highway_dqn.agent import (
    AgentConfig,
    BufferTooSmall,
    DqnAgent,
    EmptyBank,
    ReplayBuffer,
    TargetBank,
    Transition,
    build_network,
    compute_targets,
    epsilon_schedule,
    greedy_action,
    select_action,
    train_step,
)
from highway_dqn.env import Observation
from highway_dqn.net import Network


def obs(vec):
    return Observation(np.asarray(vec, dtype=float), 0)


def transition(r=0.0, a=0, terminal=False, s=(0.0, 0.0), s2=(1.0, 1.0)):
    return Transition(obs(s), a, r, obs(s2), terminal)


# -- replay buffer ------------------------------------------------------------


def test_buffer_fifo_eviction_exact():
    buf = ReplayBuffer(capacity=100)
    for i in range(300):
        buf.push(transition(r=float(i)))
    assert len(buf) == 100
    held = [tr.r for tr in buf]
    assert held == [float(i) for i in range(200, 300)]


def test_buffer_partial_fill_order():
    buf = ReplayBuffer(capacity=10)
    for i in range(4):
        buf.push(transition(r=float(i)))
    assert [tr.r for tr in buf] == [0.0, 1.0, 2.0, 3.0]


def test_buffer_too_small():
    buf = ReplayBuffer(capacity=10)
    buf.push(transition())
    with pytest.raises(BufferTooSmall):
        buf.sample(2, np.random.default_rng(0))


def test_buffer_uniform_sampling_chi_squared():
    buf = ReplayBuffer(capacity=100)
    for i in range(100):
        buf.push(transition(r=float(i)))
    rng = np.random.default_rng(42)
    counts = np.zeros(100)
    draws = 0
    while draws < 100_000:
        for tr in buf.sample(10, rng):
            counts[int(tr.r)] += 1
        draws += 10
    _, p = stats.chisquare(counts)
    assert p > 0.01


# -- action selection ----------------------------------------------------------


def fixed_q_net(values):
    net = Network(2, (), 3)
    out = net.head_layers["out"]
    out.w[:] = 0.0
    out.b[:] = np.asarray(values, dtype=float)
    return net


def test_greedy_argmax_and_tie_break():
    rng = np.random.default_rng(0)
    assert select_action(obs([0, 0]), 0.0, fixed_q_net([1.0, 3.0, 2.0]), rng) == 1
    assert select_action(obs([0, 0]), 0.0, fixed_q_net([5.0, 5.0, 1.0]), rng) == 0
    assert greedy_action(obs([0, 0]), fixed_q_net([0.0, 0.0, 7.0])) == 2


def test_random_policy_uniform_chi_squared():
    rng = np.random.default_rng(7)
    net = fixed_q_net([1.0, 0.0, 0.0])
    counts = np.zeros(3)
    for _ in range(3000):
        counts[select_action(obs([0, 0]), 1.0, net, rng)] += 1
    _, p = stats.chisquare(counts)
    assert p > 0.01


def test_noisy_net_selection_resamples_and_ignores_eps():
    cfg = AgentConfig(variant="noisy")
    net = build_network(cfg, 2, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    net.sample_noise(rng)
    eps_before = [layer.eps_in.copy() for _, layer in net.named_layers() if layer.kind == "noisy"]
    select_action(obs([0.5, 0.5]), 1.0, net, rng)
    eps_after = [layer.eps_in for _, layer in net.named_layers() if layer.kind == "noisy"]
    assert any(not np.array_equal(a, b) for a, b in zip(eps_before, eps_after))


# -- targets ---------------------------------------------------------------------


def small_bank(net, k=1):
    bank = TargetBank(k)
    bank.push(net)
    return bank


def test_terminal_target_is_reward():
    net = fixed_q_net([1.0, 2.0, 3.0])
    bank = small_bank(net)
    batch = [transition(r=-10.0, terminal=True)]
    for variant in ("dqn", "double", "averaged", "duelling", "noisy"):
        y = compute_targets(batch, variant, net, bank, gamma=0.95)
        assert y[0] == -10.0


def test_double_equals_dqn_when_online_is_target():
    rng = np.random.default_rng(3)
    net = Network(4, (8,), 3, rng=rng)
    bank = small_bank(net)
    batch = [
        Transition(obs(rng.uniform(-1, 1, 4)), int(rng.integers(3)), float(rng.normal()),
                   obs(rng.uniform(-1, 1, 4)), False)
        for _ in range(16)
    ]
    y_dqn = compute_targets(batch, "dqn", net, bank, 0.95)
    y_double = compute_targets(batch, "double", net, bank, 0.95)
    assert np.array_equal(y_dqn, y_double)


def test_averaged_with_k1_equals_dqn():
    rng = np.random.default_rng(4)
    net = Network(4, (8,), 3, rng=rng)
    bank = small_bank(net, k=1)
    batch = [
        Transition(obs(rng.uniform(-1, 1, 4)), 0, 1.0, obs(rng.uniform(-1, 1, 4)), False)
        for _ in range(8)
    ]
    assert np.array_equal(
        compute_targets(batch, "dqn", net, bank, 0.95),
        compute_targets(batch, "averaged", net, bank, 0.95),
    )


def test_averaged_uses_bank_mean():
    n1 = fixed_q_net([1.0, 0.0, 0.0])
    n2 = fixed_q_net([0.0, 0.0, 3.0])
    bank = TargetBank(5)
    bank.push(n1)
    bank.push(n2)
    batch = [transition(r=0.0)]
    y = compute_targets(batch, "averaged", n1, bank, 1.0)
    # mean Q = [0.5, 0, 1.5]; max = 1.5
    assert y[0] == pytest.approx(1.5)
    # plain dqn would use the newest snapshot only: max = 3
    assert compute_targets(batch, "dqn", n1, bank, 1.0)[0] == pytest.approx(3.0)


def test_empty_bank_raises():
    net = fixed_q_net([0.0, 0.0, 0.0])
    with pytest.raises(EmptyBank):
        compute_targets([transition()], "dqn", net, TargetBank(1), 0.95)


# -- target bank ------------------------------------------------------------------


def test_bank_ring_semantics():
    bank = TargetBank(5)
    nets = [fixed_q_net([float(i), 0.0, 0.0]) for i in range(7)]
    for net in nets:
        bank.push(net)
    assert len(bank) == 5
    assert bank.newest.forward(np.zeros(2))[0] == 6.0
    oldest = bank.snapshots[-1]
    assert oldest.forward(np.zeros(2))[0] == 2.0  # 0 and 1 evicted


def test_snapshots_frozen_against_training():
    cfg = AgentConfig(variant="dqn", alpha=1e-2, batch_size=4, hidden=(8,))
    agent = DqnAgent(cfg, input_dim=2, seed=0)
    agent.sync_target()
    x = np.array([0.3, -0.4])
    before = agent.bank.newest.forward(x).copy()
    batch = [transition(r=1.0, a=1, s=(0.3, -0.4), s2=(0.1, 0.1)) for _ in range(4)]
    for _ in range(10):
        train_step(agent, batch)
    assert np.array_equal(agent.bank.newest.forward(x), before)
    assert not np.array_equal(agent.online.forward(x), before)


def test_fresh_agent_first_sync():
    agent = DqnAgent(AgentConfig(), input_dim=4, seed=0)
    assert len(agent.bank) == 0
    agent.sync_target()
    assert len(agent.bank) == 1


# -- training step -----------------------------------------------------------------


def test_train_step_zero_loss_when_targets_match():
    cfg = AgentConfig(variant="dqn", alpha=1e-3, hidden=())
    agent = DqnAgent(cfg, input_dim=2, seed=0)
    out = agent.online.head_layers["out"]
    out.w[:] = 0.0
    out.b[:] = [2.0, 0.0, 0.0]
    agent.sync_target()
    # terminal transitions with r equal to the current Q of the taken action
    batch = [transition(r=2.0, a=0, terminal=True) for _ in range(4)]
    params_before = [p.copy() for p in agent.online.parameters()]
    loss = train_step(agent, batch)
    assert loss == 0.0
    for p, before in zip(agent.online.parameters(), params_before):
        assert np.array_equal(p, before)


def test_train_step_single_transition_hand_check():
    # one linear weight per action: q = b_a; loss = (y - b_a)^2
    cfg = AgentConfig(variant="dqn", alpha=1e-3, hidden=())
    agent = DqnAgent(cfg, input_dim=1, seed=0)
    out = agent.online.head_layers["out"]
    out.w[:] = 0.0
    out.b[:] = [0.5, 0.0, 0.0]
    agent.sync_target()
    batch = [Transition(obs([0.0]), 0, 3.0, obs([0.0]), True)]
    loss = train_step(agent, batch)
    assert loss == pytest.approx((3.0 - 0.5) ** 2, abs=1e-12)


def test_train_step_loss_decreases_on_fixed_batch():
    cfg = AgentConfig(variant="dqn", alpha=1e-3, hidden=(16,))
    agent = DqnAgent(cfg, input_dim=2, seed=1)
    agent.sync_target()
    rng = np.random.default_rng(5)
    batch = [
        Transition(obs(rng.uniform(-1, 1, 2)), int(rng.integers(3)), float(rng.normal()),
                   obs(rng.uniform(-1, 1, 2)), True)
        for _ in range(8)
    ]
    losses = [train_step(agent, batch) for _ in range(50)]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert all(l >= 0.0 for l in losses)


# -- schedules and config ------------------------------------------------------------


def test_epsilon_schedule():
    cfg = AgentConfig(eps_decay=0.999)
    assert epsilon_schedule(0, cfg) == 1.0
    assert epsilon_schedule(1000, cfg) == pytest.approx(0.999**1000, abs=1e-12)
    assert epsilon_schedule(10_000_000, cfg) == 0.01


def test_agent_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(variant="rainbow")
    with pytest.raises(ValueError):
        AgentConfig(gamma=1.5)
    with pytest.raises(ValueError):
        AgentConfig(eps_min=0.5, eps_start=0.1)
    with pytest.raises(ValueError):
        AgentConfig(averaged_k=0)


def test_build_network_per_variant():
    rng = np.random.default_rng(0)
    assert build_network(AgentConfig(variant="duelling"), 22, rng).head == "duelling"
    assert build_network(AgentConfig(variant="noisy"), 22, rng).has_noisy
    plain = build_network(AgentConfig(variant="dqn"), 22, rng)
    assert plain.head == "plain" and not plain.has_noisy
