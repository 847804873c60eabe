import numpy as np
import pytest

from common.rng import rng_stream
from cul import agent as ag
from cul.agent import AgentSettings, Batch, FisherSnapshot, ReplayBuffer, Transition
from cul.errors import BufferUnderfullError, EmptyBufferError
from cul.neural import DenseNet, OuNoise, forward


def _transition(i, dim=6, done=False):
    return Transition(np.full(dim, float(i)), 0.1, -float(i), np.full(dim, float(i) + 0.5), done)


def _fill(agent, n, rng):
    for _ in range(n):
        obs = rng.standard_normal(agent.obs_dim)
        agent.buffer.add(Transition(obs, float(rng.uniform(-1, 1)), float(-rng.random()),
                                    rng.standard_normal(agent.obs_dim), bool(rng.random() < 0.05)))


def test_settings_validation():
    with pytest.raises(ValueError, match="gamma"):
        AgentSettings(gamma=0.0).validate()
    with pytest.raises(ValueError, match="eta"):
        AgentSettings(eta=1.5).validate()
    with pytest.raises(ValueError, match="batch_size"):
        AgentSettings(batch_size=10, buffer_size=5).validate()


def test_ring_buffer_overwrites_oldest_first():
    buf = ReplayBuffer(3, 6)
    for i in range(5):
        buf.add(_transition(i))
    assert len(buf) == 3
    assert buf.cursor == 2
    assert list(buf.states()[:, 0]) == [2.0, 3.0, 4.0]


def test_buffer_rejects_unnormalized_action():
    buf = ReplayBuffer(3, 6)
    t = _transition(0)
    t.action = 1.5
    with pytest.raises(ValueError, match="out of range"):
        buf.add(t)


def test_sample_underfull_and_without_replacement():
    buf = ReplayBuffer(10, 6)
    for i in range(4):
        buf.add(_transition(i))
    rng = rng_stream(0, "test/replay")
    with pytest.raises(BufferUnderfullError):
        buf.sample(5, rng)
    batch = buf.sample(4, rng)
    assert len(batch) == 4
    assert sorted(batch.obs[:, 0]) == [0.0, 1.0, 2.0, 3.0]


def test_empty_buffer_has_no_states():
    with pytest.raises(EmptyBufferError):
        ReplayBuffer(4, 6).states()


def test_buffer_arrays_keep_storage_and_cursor():
    buf = ReplayBuffer(3, 6)
    for i in range(4):
        buf.add(_transition(i))
    back = ReplayBuffer.from_arrays(3, buf.to_arrays(), cursor=buf.cursor)
    assert back.cursor == buf.cursor and len(back) == 3
    assert np.array_equal(back.obs, buf.obs)
    back.add(_transition(9))
    buf.add(_transition(9))
    assert np.array_equal(back.states(), buf.states())


def test_create_agent_shapes_and_targets(tiny_agent):
    assert tiny_agent.actor.sizes == (6, 8, 8, 1)
    assert tiny_agent.critic.sizes == (7, 8, 8, 1)
    assert tiny_agent.actor.output == "tanh" and tiny_agent.critic.output == "linear"
    assert np.array_equal(tiny_agent.actor_target.params, tiny_agent.actor.params)
    assert tiny_agent.actor_target.params is not tiny_agent.actor.params
    assert tiny_agent.ewc is None


def test_act_is_deterministic_without_exploration(tiny_agent):
    obs = np.linspace(-1, 1, 6)
    a = ag.act(tiny_agent, obs)
    assert a == ag.act(tiny_agent, obs)
    assert -1.0 <= a <= 1.0


def test_act_clamps_explored_action(tiny_agent):
    tiny_agent.noise = OuNoise(sigma=1e6)
    rng = rng_stream(1, "test/noise")
    acts = [ag.act(tiny_agent, np.zeros(6), explore=True, rng=rng) for _ in range(20)]
    assert all(abs(a) == 1.0 for a in acts)


def test_td_targets_terminal_and_bootstrap(tiny_agent):
    rng = rng_stream(2, "test/td")
    obs, next_obs = rng.standard_normal((2, 6)), rng.standard_normal((2, 6))
    batch = Batch(obs, np.array([0.2, -0.3]), np.array([-1.0, -2.0]), next_obs, np.array([1.0, 0.0]))
    y = ag.td_targets(tiny_agent, batch)
    assert y[0] == -1.0
    a_next, _ = forward(tiny_agent.actor_target, next_obs[1])
    q_next, _ = forward(tiny_agent.critic_target, np.concatenate([next_obs[1], a_next]))
    assert y[1] == pytest.approx(-2.0 + 0.99 * q_next[0], rel=1e-12)


def test_critic_update_reports_loss_and_moves_only_critic(tiny_agent):
    rng = rng_stream(3, "test/critic")
    _fill(tiny_agent, 16, rng)
    batch = tiny_agent.buffer.sample(8, rng)
    q, _ = forward(tiny_agent.critic, np.hstack([batch.obs, batch.action[:, None]]))
    expected = float(np.mean((q[:, 0] - ag.td_targets(tiny_agent, batch)) ** 2))
    actor_before = tiny_agent.actor.params.copy()
    critic_before = tiny_agent.critic.params.copy()
    loss = ag.critic_update(tiny_agent, batch)
    assert loss == pytest.approx(expected, rel=1e-12)
    assert np.array_equal(tiny_agent.actor.params, actor_before)
    assert not np.array_equal(tiny_agent.critic.params, critic_before)


def test_ewc_penalty_and_gradient_values():
    snap = FisherSnapshot(np.zeros(2), np.array([1.0, 2.0]))
    theta = np.ones(2)
    assert ag.ewc_penalty(None, theta, 2.0, 0.5) == 0.0
    assert ag.ewc_penalty(snap, theta, 2.0, 0.5) == pytest.approx(1.5)
    assert ag.ewc_penalty(snap, np.zeros(2), 2.0, 0.5) == 0.0
    assert np.allclose(ag.ewc_gradient(snap, theta, 2.0, 0.5), [1.0, 2.0])
    assert np.array_equal(ag.ewc_gradient(None, theta, 2.0, 0.5), np.zeros(2))


def test_actor_objective_gradient_matches_central_differences(tiny_agent):
    rng = rng_stream(4, "test/actor")
    obs = rng.standard_normal((5, 6))
    n = tiny_agent.actor.n_params
    snap = FisherSnapshot(tiny_agent.actor.params + rng.standard_normal(n) * 0.01, rng.uniform(0.0, 1.0, n))
    _, grad = ag.actor_objective(tiny_agent, obs, snap, lam=3.0, gamma_online=0.9)
    base = tiny_agent.actor.params.copy()
    h = 1e-6
    fd = np.zeros(n)
    for j in range(n):
        tiny_agent.actor.params = base.copy()
        tiny_agent.actor.params[j] += h
        plus, _ = ag.actor_objective(tiny_agent, obs, snap, 3.0, 0.9)
        tiny_agent.actor.params[j] -= 2 * h
        minus, _ = ag.actor_objective(tiny_agent, obs, snap, 3.0, 0.9)
        fd[j] = (plus - minus) / (2 * h)
    tiny_agent.actor.params = base
    assert np.allclose(grad, fd, rtol=1e-4, atol=1e-7)


def test_learn_step_waits_for_a_full_batch(tiny_agent):
    rng = rng_stream(5, "test/learn")
    _fill(tiny_agent, 7, rng)
    before = tiny_agent.actor.params.copy()
    assert ag.learn_step(tiny_agent, rng) is None
    assert np.array_equal(tiny_agent.actor.params, before)


def test_learn_step_updates_nets_and_soft_targets(tiny_agent):
    rng = rng_stream(6, "test/learn")
    _fill(tiny_agent, 8, rng)
    target_before = tiny_agent.actor_target.params.copy()
    out = ag.learn_step(tiny_agent, rng)
    assert out is not None
    critic_loss, _ = out
    assert critic_loss >= 0.0
    eta = tiny_agent.settings.eta
    assert np.allclose(tiny_agent.actor_target.params,
                       eta * tiny_agent.actor.params + (1 - eta) * target_before, rtol=0, atol=1e-15)


def test_fisher_of_linear_actor_has_closed_form():
    rng = rng_stream(7, "test/fisher")
    net = DenseNet((3, 1), "linear", rng.standard_normal(4))
    states = rng.standard_normal((10, 3))
    f = ag.fisher_diagonal(net, states, n_batch=3)
    assert np.allclose(f[:3], np.mean(states ** 2, axis=0), rtol=1e-12)
    assert f[3] == pytest.approx(1.0)


def test_compute_fisher_uses_buffer_states(tiny_agent):
    rng = rng_stream(8, "test/fisher")
    with pytest.raises(EmptyBufferError):
        ag.compute_fisher(tiny_agent)
    _fill(tiny_agent, 20, rng)
    f = ag.compute_fisher(tiny_agent, rng=rng)
    assert f.shape == tiny_agent.actor.params.shape
    assert np.all(f >= 0.0)
    # 20 < ewc_samples, so every stored state is used
    assert np.allclose(f, ag.fisher_diagonal(tiny_agent.actor, tiny_agent.buffer.states()))


def test_consolidation_recursion():
    f1, f2, f3 = np.array([1.0, 0.0]), np.array([0.0, 2.0]), np.array([1.0, 1.0])
    snap = ag.consolidate_task(None, np.array([1.0, 1.0]), f1, 0.9)
    assert snap.task_count == 1 and np.array_equal(snap.fisher, f1)
    snap = ag.consolidate_task(snap, np.array([2.0, 2.0]), f2, 0.9)
    snap = ag.consolidate_task(snap, np.array([3.0, 3.0]), f3, 0.9)
    assert snap.task_count == 3
    assert np.allclose(snap.fisher, 0.81 * f1 + 0.9 * f2 + f3)
    assert np.array_equal(snap.anchor, [3.0, 3.0])
    with pytest.raises(ValueError, match="length mismatch"):
        ag.consolidate_task(snap, np.zeros(3), np.zeros(3), 0.9)


def test_online_penalty_equals_weighted_multi_anchor_at_common_anchor():
    rng = rng_stream(9, "test/ewc")
    anchor = rng.standard_normal(5)
    fishers = [rng.uniform(0, 1, 5) for _ in range(3)]
    snap = None
    for f in fishers:
        snap = ag.consolidate_task(snap, anchor, f, 0.9)
    theta = anchor + rng.standard_normal(5)
    weighted = [(anchor, 0.9 ** (2 - m) * f) for m, f in enumerate(fishers)]
    assert ag.ewc_penalty(snap, theta, 2.0, 1.0) == pytest.approx(ag.multi_anchor_penalty(weighted, theta, 2.0), rel=1e-12)
