# src/cul/agent.py
"""DDPG actor-critic with a replay buffer, target networks and online-EWC on the actor."""

import logging
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from cul.errors import BufferUnderfullError, EmptyBufferError
from cul.neural import (
    HIDDEN_WIDTH, DenseNet, OptState, OuNoise,
    init_net, forward, backward, squared_param_grads, opt_step, ou_sample, soft_update,
)

logger = logging.getLogger(__name__)


@dataclass
class AgentSettings:
    hidden: int = HIDDEN_WIDTH
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    gamma: float = 0.99
    eta: float = 1e-3
    batch_size: int = 128
    buffer_size: int = 100_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_dt: float = 1.0
    final_scale: float = 1e-3
    ewc_lambda: float = 1.0
    ewc_batch: int = 128
    ewc_samples: int = 100_000
    ewc_gamma: float = 0.9

    def validate(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("need 1 <= batch_size <= buffer_size")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class Transition:
    obs: np.ndarray
    action: float
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class Batch:
    obs: np.ndarray       # (M, d)
    action: np.ndarray    # (M,)
    reward: np.ndarray    # (M,)
    next_obs: np.ndarray  # (M, d)
    done: np.ndarray      # (M,) as 0.0 / 1.0

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    """Ring buffer; once full the oldest transition is overwritten first."""

    def __init__(self, capacity, obs_dim):
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.obs = np.zeros((self.capacity, self.obs_dim))
        self.action = np.zeros(self.capacity)
        self.reward = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, self.obs_dim))
        self.done = np.zeros(self.capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, t):
        if not abs(t.action) <= 1.0:
            raise ValueError(f"normalized action out of range: {t.action}")
        i = self.cursor
        self.obs[i] = t.obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = 1.0 if t.done else 0.0
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _ordered(self):
        """Indices oldest -> newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def take(self, idx):
        return Batch(self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx], self.done[idx])

    def sample(self, batch_size, rng):
        """Uniform mini-batch without replacement."""
        if self.size < batch_size:
            raise BufferUnderfullError(self.size, batch_size)
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.take(idx)

    def states(self, n=None, rng=None):
        """n stored observations; all of them, oldest first, when n covers the buffer."""
        if self.size == 0:
            raise EmptyBufferError("replay buffer is empty")
        if n is None or n >= self.size:
            return self.obs[self._ordered()]
        return self.obs[rng.choice(self.size, size=n, replace=False)]

    def to_arrays(self):
        """Filled slots in storage order; restore with the same cursor."""
        n = self.size
        return {
            "obs": self.obs[:n], "action": self.action[:n], "reward": self.reward[:n],
            "next_obs": self.next_obs[:n], "done": self.done[:n],
        }

    @classmethod
    def from_arrays(cls, capacity, arrays, cursor=None):
        buf = cls(capacity, arrays["obs"].shape[1])
        n = len(arrays["reward"])
        buf.obs[:n] = arrays["obs"]
        buf.action[:n] = arrays["action"]
        buf.reward[:n] = arrays["reward"]
        buf.next_obs[:n] = arrays["next_obs"]
        buf.done[:n] = arrays["done"]
        buf.size = n
        buf.cursor = (n if cursor is None else int(cursor)) % buf.capacity
        return buf


@dataclass
class FisherSnapshot:
    anchor: np.ndarray
    fisher: np.ndarray
    task_count: int = 1


@dataclass
class AgentState:
    actor: DenseNet
    critic: DenseNet
    actor_target: DenseNet
    critic_target: DenseNet
    actor_opt: OptState
    critic_opt: OptState
    noise: OuNoise
    buffer: ReplayBuffer
    settings: AgentSettings
    ewc: Optional[FisherSnapshot] = field(default=None)

    @property
    def gamma(self):
        return self.settings.gamma

    @property
    def eta(self):
        return self.settings.eta

    @property
    def obs_dim(self):
        return self.actor.sizes[0]


def create_agent(obs_dim, settings, rng):
    settings = settings.validate()
    h = settings.hidden
    actor = init_net((obs_dim, h, h, 1), "tanh", rng, final_scale=settings.final_scale)
    critic = init_net((obs_dim + 1, h, h, 1), "linear", rng)
    agent = AgentState(
        actor=actor,
        critic=critic,
        actor_target=actor.copy(),
        critic_target=critic.copy(),
        actor_opt=OptState.for_params(actor.n_params, lr=settings.actor_lr),
        critic_opt=OptState.for_params(critic.n_params, lr=settings.critic_lr),
        noise=OuNoise(theta=settings.ou_theta, sigma=settings.ou_sigma, dt=settings.ou_dt),
        buffer=ReplayBuffer(settings.buffer_size, obs_dim),
        settings=settings,
    )
    logger.debug(f"create_agent: actor {actor.n_params} params, critic {critic.n_params} params")
    return agent


def act(agent, obs, explore=False, rng=None):
    """Normalized action in [-1, 1]; OU noise is added before clamping when exploring."""
    out, _ = forward(agent.actor, obs)
    a = float(out[0])
    if explore:
        a = min(1.0, max(-1.0, a + ou_sample(agent.noise, rng)))
    return a


def td_targets(agent, batch):
    """Y = r + gamma (1 - done) Q'(s', mu'(s'))."""
    a_next, _ = forward(agent.actor_target, batch.next_obs)
    q_next, _ = forward(agent.critic_target, np.hstack([batch.next_obs, a_next]))
    return batch.reward + agent.gamma * (1.0 - batch.done) * q_next[:, 0]


def critic_update(agent, batch):
    """One optimizer step on the mean squared TD error; returns the pre-step loss."""
    m = len(batch)
    y = td_targets(agent, batch)
    q, cache = forward(agent.critic, np.hstack([batch.obs, batch.action[:, None]]))
    diff = q[:, 0] - y
    loss = float(np.mean(diff ** 2))
    grad, _ = backward(agent.critic, cache, (2.0 / m * diff)[:, None])
    agent.critic.params = opt_step(agent.critic_opt, agent.critic.params, grad)
    return loss


def ewc_penalty(snapshot, theta, lam, gamma_online):
    """(lam / 2) * sum(gamma_online * F* * (theta - theta*)^2)."""
    if snapshot is None:
        return 0.0
    d = theta - snapshot.anchor
    return float(0.5 * lam * gamma_online * np.sum(snapshot.fisher * d * d))


def ewc_gradient(snapshot, theta, lam, gamma_online):
    if snapshot is None:
        return np.zeros_like(theta)
    return lam * gamma_online * snapshot.fisher * (theta - snapshot.anchor)


def multi_anchor_penalty(anchors, theta, lam):
    """Standard EWC: one (theta*_m, F_m) pair per past task."""
    total = 0.0
    for anchor, fisher in anchors:
        d = theta - anchor
        total += 0.5 * lam * float(np.sum(fisher * d * d))
    return total


def actor_objective(agent, obs, ewc=None, lam=1.0, gamma_online=0.9):
    """
    -mean Q(s, mu(s)) plus the online-EWC penalty, and its gradient w.r.t. the actor.

    The critic is only differentiated through its action input.
    """
    m = obs.shape[0]
    a, a_cache = forward(agent.actor, obs)
    q, q_cache = forward(agent.critic, np.hstack([obs, a]))
    objective = -float(np.mean(q))
    _, dq_dinput = backward(agent.critic, q_cache, np.full((m, 1), -1.0 / m))
    grad, _ = backward(agent.actor, a_cache, dq_dinput[:, -1:])
    if ewc is not None:
        objective += ewc_penalty(ewc, agent.actor.params, lam, gamma_online)
        grad = grad + ewc_gradient(ewc, agent.actor.params, lam, gamma_online)
    return objective, grad


def actor_update(agent, batch, ewc=None, lam=1.0, gamma_online=0.9):
    """One actor step, then soft updates of both target networks."""
    objective, grad = actor_objective(agent, batch.obs, ewc, lam, gamma_online)
    agent.actor.params = opt_step(agent.actor_opt, agent.actor.params, grad)
    agent.actor_target.params = soft_update(agent.actor_target.params, agent.actor.params, agent.eta)
    agent.critic_target.params = soft_update(agent.critic_target.params, agent.critic.params, agent.eta)
    return objective


def learn_step(agent, rng):
    """Critic then actor update from one mini-batch; None while the buffer is underfull."""
    s = agent.settings
    if len(agent.buffer) < s.batch_size:
        return None
    batch = agent.buffer.sample(s.batch_size, rng)
    critic_loss = critic_update(agent, batch)
    actor_obj = actor_update(agent, batch, agent.ewc, s.ewc_lambda, s.ewc_gamma)
    return critic_loss, actor_obj


def fisher_diagonal(net, states, n_batch=128):
    """(1/n) sum_l (d mu(s_l) / d theta_j)^2 over the given states."""
    states = np.atleast_2d(states)
    n = states.shape[0]
    total = np.zeros(net.n_params)
    for start in range(0, n, n_batch):
        _, cache = forward(net, states[start:start + n_batch])
        total += squared_param_grads(net, cache)
    return total / n


def compute_fisher(agent, buffer=None, n_batch=None, n_samples=None, rng=None):
    buffer = buffer if buffer is not None else agent.buffer
    n_batch = n_batch or agent.settings.ewc_batch
    n_samples = n_samples or agent.settings.ewc_samples
    if len(buffer) == 0:
        raise EmptyBufferError("cannot estimate Fisher information from an empty buffer")
    states = buffer.states(min(n_samples, len(buffer)), rng)
    fisher = fisher_diagonal(agent.actor, states, n_batch)
    logger.debug(f"compute_fisher: {len(states)} states, mean F={fisher.mean():.3e}, max F={fisher.max():.3e}")
    return fisher


def consolidate_task(snapshot, theta_now, fisher_now, gamma_online):
    """F* <- gamma F*_prev + F_t ; theta* <- theta_now."""
    theta_now = np.asarray(theta_now, dtype=float)
    fisher_now = np.asarray(fisher_now, dtype=float)
    if theta_now.shape != fisher_now.shape:
        raise ValueError(f"length mismatch: theta {theta_now.shape}, F {fisher_now.shape}")
    if snapshot is None:
        return FisherSnapshot(theta_now.copy(), fisher_now.copy(), 1)
    if snapshot.fisher.shape != fisher_now.shape:
        raise ValueError(f"length mismatch: F* {snapshot.fisher.shape}, F {fisher_now.shape}")
    return FisherSnapshot(theta_now.copy(), gamma_online * snapshot.fisher + fisher_now, snapshot.task_count + 1)
