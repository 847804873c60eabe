# src/cul/curriculum.py
"""
Continual uncertainty learning: staged plant sets, the residual closed loop seen by
the agent, episode rollouts and the stage-wise training loop with online-EWC.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from cul.agent import (
    AgentSettings, Transition, act, compute_fisher, consolidate_task, create_agent, learn_step,
)
from cul.dynamics import (
    N_STAGES, X_B, PlantParams, UncertaintyRanges,
    active_components, reference_signal, rest_state, sample_plant, step_plant, DEFAULT_SUBSTEPS,
)
from cul.errors import NonFiniteError, TrainingAbortedError
from cul.lincontrol import mbc_step

logger = logging.getLogger(__name__)

OBS_DIM = 6
TRAIN, EVAL = "train", "eval"


class ControlMode(str, Enum):
    RESIDUAL = "residual"
    RL_ONLY = "rl_only"
    MBC_ONLY = "mbc_only"
    NONE = "none"

    @property
    def uses_mbc(self):
        return self in (ControlMode.RESIDUAL, ControlMode.MBC_ONLY)

    @property
    def uses_agent(self):
        return self in (ControlMode.RESIDUAL, ControlMode.RL_ONLY)


# training variant -> (curriculum, control mode, consolidate with EWC)
TRAINING_VARIANTS = {
    "proposed": (True, ControlMode.RESIDUAL, True),
    "no_mbc": (True, ControlMode.RL_ONLY, True),
    "full_randomization": (False, ControlMode.RESIDUAL, False),
}


@dataclass
class StageSchedule:
    n_stages: int = N_STAGES
    episodes_per_stage: int = 100

    def validate(self):
        if not 1 <= self.n_stages <= N_STAGES:
            raise ValueError(f"n_stages must lie in 1..{N_STAGES}")
        if self.episodes_per_stage < 1:
            raise ValueError("episodes_per_stage must be >= 1")
        return self

    @property
    def total_episodes(self):
        return self.n_stages * self.episodes_per_stage

    def stage_of(self, episode):
        return episode // self.episodes_per_stage

    def support(self, stage):
        """Plant indices p_t is uniform over."""
        return tuple(range(stage + 1))

    def is_stage_end(self, episode):
        return (episode + 1) % self.episodes_per_stage == 0


@dataclass
class CostWeights:
    q: float = 1e4
    r: float = 1e-4

    def validate(self):
        if self.q < 0.0 or self.r <= 0.0:
            raise ValueError(f"need Q >= 0 and R > 0, got Q={self.q}, R={self.r}")
        return self


@dataclass
class ObservationScales:
    s_y: float = 0.03
    s_i: float = 0.03
    s_d: float = 1.0
    u_max: float = 50.0

    def validate(self):
        for name in ("s_y", "s_i", "s_d", "u_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"observation scale {name} must be > 0")
        return self


@dataclass
class EpisodeSettings:
    horizon: int = 667
    dt: float = 0.006
    substeps: int = DEFAULT_SUBSTEPS
    scales: ObservationScales = field(default_factory=ObservationScales)
    cost: CostWeights = field(default_factory=CostWeights)

    def validate(self):
        if self.horizon < 1 or self.dt <= 0.0 or self.substeps < 1:
            raise ValueError(f"need horizon >= 1, dt > 0, substeps >= 1; got {self.horizon}, {self.dt}, {self.substeps}")
        self.scales.validate()
        self.cost.validate()
        return self


@dataclass
class TrainingConfig:
    episode: EpisodeSettings = field(default_factory=EpisodeSettings)
    agent: AgentSettings = field(default_factory=AgentSettings)
    ranges: UncertaintyRanges = field(default_factory=UncertaintyRanges)
    nominal: PlantParams = field(default_factory=PlantParams)
    variant: str = "proposed"

    @property
    def plan(self):
        if self.variant not in TRAINING_VARIANTS:
            raise ValueError(f"unknown training variant {self.variant!r}; expected one of {sorted(TRAINING_VARIANTS)}")
        return TRAINING_VARIANTS[self.variant]


@dataclass
class LoopState:
    """Augmented closed-loop state: plant, controller, and observation memory."""

    plant: np.ndarray
    controller: np.ndarray
    integral: float = 0.0
    prev_error: float = 0.0
    step: int = 0

    @classmethod
    def rest(cls, controller_order):
        return cls(rest_state(), np.zeros(controller_order))

    def copy(self):
        return LoopState(self.plant.copy(), self.controller.copy(), self.integral, self.prev_error, self.step)


@dataclass
class StepInfo:
    t: float
    y_r: float
    y: float
    e: float
    u_mbc: float
    obs: np.ndarray


@dataclass
class EpisodeRecord:
    t: np.ndarray
    y_r: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u_mbc: np.ndarray
    u_rl: np.ndarray
    u: np.ndarray
    r: np.ndarray
    episode_return: float
    stage: int
    plant_index: int
    params: PlantParams
    mode: str
    aborted: bool = False
    diagnostic: str = ""

    @property
    def complete(self):
        return not self.aborted and bool(np.all(np.isfinite(self.e)))

    def __len__(self):
        return len(self.t)


@dataclass
class RewardRow:
    episode: int
    stage: int
    episode_return: float
    plant_index: int


@dataclass
class TrainingProgress:
    """Everything needed to resume training at `next_episode`."""

    agent: object
    rng_state: dict
    next_episode: int
    curve: list
    variant: str
    stage_end: bool = False


@dataclass
class TrainResult:
    agent: object
    snapshot: object
    curve: list
    plant_sets: list
    checkpoints: list


def active_uncertainty_set(t):
    return list(active_components(t))


def sample_task(t, rng):
    """Uniform plant index over {0, ..., t}."""
    if not 0 <= t < N_STAGES:
        raise ValueError(f"stage must be in 0..{N_STAGES - 1}, got {t}")
    return int(rng.integers(0, t + 1))


def build_observation(loop, y_r, u_mbc, scales, dt):
    """
    [y^r, x_B, e, integral of e, de/dt, u^MBC], each over its fixed scale.

    Rectangle-rule integral including the current error; backward-difference
    derivative against the previous error (0 at reset).
    """
    y = loop.plant[X_B]
    e = y_r - y
    integral = loop.integral + e * dt
    deriv = (e - loop.prev_error) / dt
    return np.array([
        y_r / scales.s_y,
        y / scales.s_y,
        e / scales.s_y,
        integral / scales.s_i,
        deriv / scales.s_d,
        u_mbc / scales.u_max,
    ])


def reward(e, u, w):
    return -(w.q * e * e + w.r * u * u)


class ClosedLoop:
    """Plant driven by u = u^MBC + u_max * a, with the controller and observation memory."""

    def __init__(self, params, mbc, mode, settings, disturbance=None):
        self.params = params
        self.mode = ControlMode(mode)
        self.settings = settings
        self.controller = mbc.copy() if (mbc is not None and self.mode.uses_mbc) else None
        if self.mode.uses_mbc and self.controller is None:
            raise ValueError(f"control mode {self.mode.value} needs an MBC")
        self.disturbance = disturbance
        self.reset()

    def reset(self):
        order = self.controller.order if self.controller is not None else 0
        if self.controller is not None:
            self.controller.reset()
        self.state = LoopState.rest(order)

    def snapshot(self):
        return self.state.copy()

    def restore(self, state):
        self.state = state.copy()
        if self.controller is not None:
            self.controller.x_c = self.state.controller.copy()

    def _error(self):
        t = self.state.step * self.settings.dt
        y_r = reference_signal(self.params, t)
        y = float(self.state.plant[X_B])
        return t, y_r, y, y_r - y

    def observe(self):
        """Reads the error, runs the MBC (advancing it) and forms the observation."""
        t, y_r, y, e = self._error()
        u_mbc = 0.0
        if self.controller is not None:
            u_mbc = mbc_step(self.controller, e)
        obs = build_observation(self.state, y_r, u_mbc, self.settings.scales, self.settings.dt)
        self.state.integral += e * self.settings.dt
        self.state.prev_error = e
        if self.controller is not None:
            self.state.controller = self.controller.x_c.copy()
        return StepInfo(t, y_r, y, e, u_mbc, obs)

    def peek(self):
        """Observation for the current step without committing anything."""
        t, y_r, y, e = self._error()
        u_mbc = self.controller.output(e) if self.controller is not None else 0.0
        obs = build_observation(self.state, y_r, u_mbc, self.settings.scales, self.settings.dt)
        return StepInfo(t, y_r, y, e, u_mbc, obs)

    def advance(self, info, a):
        """Applies the combined input for one sample; returns (u_rl, u, r)."""
        u_rl = self.settings.scales.u_max * a if self.mode.uses_agent else 0.0
        u = info.u_mbc + u_rl
        r = reward(info.e, u, self.settings.cost)
        w = self.disturbance(info.t) if self.disturbance is not None else 0.0
        self.state.plant = step_plant(self.state.plant, u, w, self.params, self.settings.dt, self.settings.substeps)
        self.state.step += 1
        return u_rl, u, r


def run_episode(params, mbc, agent, mode, variant, rngs=None, settings=None,
                stage=0, plant_index=0, disturbance=None):
    """
    One horizon-T rollout from rest. In train mode the agent explores, every
    transition is stored and one critic + one actor update follow each step.
    """
    settings = (settings or EpisodeSettings()).validate()
    variant = ControlMode(variant)
    training = mode == TRAIN
    if variant.uses_agent and agent is None:
        raise ValueError(f"control mode {variant.value} needs an agent")

    loop = ClosedLoop(params, mbc, variant, settings, disturbance)
    horizon = settings.horizon
    cols = {name: np.full(horizon, np.nan) for name in ("t", "y_r", "y", "e", "u_mbc", "u_rl", "u", "r")}
    aborted, diagnostic = False, ""

    if training and variant.uses_agent:
        agent.noise.reset()

    info = loop.observe()
    for k in range(horizon):
        a = act(agent, info.obs, explore=training, rng=rngs.noise if training else None) if variant.uses_agent else 0.0
        try:
            u_rl, u, r = loop.advance(info, a)
        except NonFiniteError as exc:
            aborted, diagnostic = True, f"step {k}: {exc}"
            logger.warning(f"run_episode aborted at step {k} (stage {stage}, plant {plant_index}): {exc}")
            break
        for name, v in (("t", info.t), ("y_r", info.y_r), ("y", info.y), ("e", info.e),
                        ("u_mbc", info.u_mbc), ("u_rl", u_rl), ("u", u), ("r", r)):
            cols[name][k] = v

        done = k == horizon - 1
        next_info = loop.peek() if done else loop.observe()
        if training and variant.uses_agent:
            agent.buffer.add(Transition(info.obs, a, r, next_info.obs, done))
            learn_step(agent, rngs.replay)
        info = next_info

    episode_return = float(np.nansum(cols["r"]))
    return EpisodeRecord(episode_return=episode_return, stage=stage, plant_index=plant_index,
                         params=params, mode=variant.value, aborted=aborted, diagnostic=diagnostic, **cols)


def train(schedule, config, rngs, mbc, agent=None, resume=None, on_checkpoint=None):
    """
    Stage t = 0..n-1: the plant set grows to {0..t}; each episode draws i ~ p_t and
    parameters for plant i, rolls out with learning, and at the stage end the actor's
    Fisher information is folded into the online-EWC snapshot.

    `on_checkpoint(progress)` is called at every stage end and before aborting; its
    return value (e.g. a path) is collected in the result.
    """
    schedule = schedule.validate()
    curriculum, mode, consolidate = config.plan
    s = config.agent

    if resume is not None:
        agent = resume.agent
        rngs.set_state(resume.rng_state)
        start, curve = resume.next_episode, list(resume.curve)
        logger.info(f"train[{config.variant}]: resuming at episode {start}")
    else:
        if agent is None:
            agent = create_agent(OBS_DIM, s, rngs.init)
        start, curve = 0, []

    plant_sets, checkpoints = [], []
    for stage in range(schedule.stage_of(start), schedule.n_stages):
        support = schedule.support(stage) if curriculum else (N_STAGES - 1,)
        plant_sets.append(support)
        logger.info(f"train[{config.variant}]: stage {stage}, plant set {support}, "
                    f"active uncertainties {active_uncertainty_set(max(support))}")

    for episode in range(start, schedule.total_episodes):
        stage = schedule.stage_of(episode)
        index = sample_task(stage, rngs.plant) if curriculum else N_STAGES - 1
        params = sample_plant(index, config.ranges, rngs.plant, config.nominal)
        rec = run_episode(params, mbc if mode.uses_mbc else None, agent, TRAIN, mode, rngs,
                          config.episode, stage=stage, plant_index=index)
        curve.append(RewardRow(episode, stage, rec.episode_return, index))
        logger.debug(f"train[{config.variant}]: episode {episode} stage {stage} plant {index} return {rec.episode_return:.4f}")

        if rec.aborted:
            progress = TrainingProgress(agent, rngs.get_state(), episode + 1, curve, config.variant)
            path = on_checkpoint(progress) if on_checkpoint else None
            raise TrainingAbortedError(f"episode {episode}: {rec.diagnostic}", checkpoint_path=path)

        if schedule.is_stage_end(episode):
            if consolidate:
                fisher = compute_fisher(agent, rng=rngs.fisher)
                agent.ewc = consolidate_task(agent.ewc, agent.actor.params, fisher, s.ewc_gamma)
                logger.info(f"train[{config.variant}]: consolidated stage {stage} (task count {agent.ewc.task_count})")
            returns = [row.episode_return for row in curve if row.stage == stage]
            logger.info(f"train[{config.variant}]: stage {stage} done, mean return {np.mean(returns):.4f}")
            if on_checkpoint:
                progress = TrainingProgress(agent, rngs.get_state(), episode + 1, curve, config.variant, stage_end=True)
                checkpoints.append(on_checkpoint(progress))

    return TrainResult(agent=agent, snapshot=agent.ewc, curve=curve, plant_sets=plant_sets, checkpoints=checkpoints)
