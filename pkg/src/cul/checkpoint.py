# src/cul/checkpoint.py
"""Agent and training-progress persistence as .npz archives with a JSON metadata entry."""

import os
import json
import logging

import numpy as np

from common.serialization import dumps
from cul.agent import AgentSettings, AgentState, FisherSnapshot, ReplayBuffer
from cul.curriculum import RewardRow, TrainingProgress
from cul.neural import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, DenseNet, OptState, OuNoise

logger = logging.getLogger(__name__)

NETS = ("actor", "critic", "actor_target", "critic_target")
OPTS = ("actor_opt", "critic_opt")


def _net_arrays(prefix, net):
    return {f"{prefix}/params": net.params, f"{prefix}/sizes": np.array(net.sizes)}


def _opt_arrays(prefix, opt):
    return {f"{prefix}/m": opt.m, f"{prefix}/v": opt.v}


def save_checkpoint(path, agent, meta=None, progress=None):
    """
    Writes nets, optimizer moments, exploration noise, replay buffer and the EWC
    snapshot. `progress` adds what resuming needs: rng states, episode counter, curve.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    arrays = {}
    heads = {}
    for name in NETS:
        net = getattr(agent, name)
        arrays.update(_net_arrays(name, net))
        heads[name] = net.output
    opts = {}
    for name in OPTS:
        opt = getattr(agent, name)
        arrays.update(_opt_arrays(name, opt))
        opts[name] = {"t": opt.t, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps}
    for key, value in agent.buffer.to_arrays().items():
        arrays[f"buffer/{key}"] = value
    if agent.ewc is not None:
        arrays["ewc/anchor"] = agent.ewc.anchor
        arrays["ewc/fisher"] = agent.ewc.fisher

    doc = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "heads": heads,
        "optimizers": opts,
        "noise": {"value": agent.noise.value, "theta": agent.noise.theta, "sigma": agent.noise.sigma,
                  "mean": agent.noise.mean, "dt": agent.noise.dt},
        "buffer_capacity": agent.buffer.capacity,
        "buffer_cursor": agent.buffer.cursor,
        "ewc_task_count": agent.ewc.task_count if agent.ewc is not None else 0,
        "settings": agent.settings.to_dict(),
        "meta": dict(meta or {}),
    }
    if progress is not None:
        doc["progress"] = {
            "next_episode": progress.next_episode,
            "variant": progress.variant,
            "stage_end": progress.stage_end,
            "rng_state": progress.rng_state,
            "curve": [[r.episode, r.stage, r.episode_return, r.plant_index] for r in progress.curve],
        }
    arrays["meta"] = np.array(dumps(doc))
    try:
        with open(path, "wb") as fh:
            np.savez_compressed(fh, **arrays)
    except OSError as e:
        raise OSError(f"failed writing checkpoint {path}: {e}") from e
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path):
    """Returns (AgentState, metadata document)."""
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except OSError as e:
        raise OSError(f"failed reading checkpoint {path}: {e}") from e
    doc = json.loads(str(arrays["meta"]))
    if doc.get("magic") != CHECKPOINT_MAGIC or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} checkpoint")

    nets = {
        name: DenseNet(arrays[f"{name}/sizes"].tolist(), doc["heads"][name], arrays[f"{name}/params"])
        for name in NETS
    }
    opts = {}
    for name in OPTS:
        o = doc["optimizers"][name]
        opts[name] = OptState(arrays[f"{name}/m"].copy(), arrays[f"{name}/v"].copy(), int(o["t"]),
                              o["lr"], o["beta1"], o["beta2"], o["eps"])
    buffer = ReplayBuffer.from_arrays(
        doc["buffer_capacity"],
        {k: arrays[f"buffer/{k}"] for k in ("obs", "action", "reward", "next_obs", "done")},
        doc["buffer_cursor"],
    )
    ewc = None
    if "ewc/anchor" in arrays:
        ewc = FisherSnapshot(arrays["ewc/anchor"].copy(), arrays["ewc/fisher"].copy(), int(doc["ewc_task_count"]))

    agent = AgentState(
        actor=nets["actor"],
        critic=nets["critic"],
        actor_target=nets["actor_target"],
        critic_target=nets["critic_target"],
        actor_opt=opts["actor_opt"],
        critic_opt=opts["critic_opt"],
        noise=OuNoise(**doc["noise"]),
        buffer=buffer,
        settings=AgentSettings(**doc["settings"]),
        ewc=ewc,
    )
    logger.debug(f"Loaded checkpoint {path}: actor {agent.actor.n_params} params, buffer {len(buffer)}")
    return agent, doc


def load_progress(path):
    """(TrainingProgress, metadata) for resuming from a checkpoint written with `progress`."""
    agent, doc = load_checkpoint(path)
    if "progress" not in doc:
        raise ValueError(f"{path}: checkpoint carries no training progress")
    p = doc["progress"]
    curve = [RewardRow(int(e), int(s), float(r), int(i)) for e, s, r, i in p["curve"]]
    progress = TrainingProgress(agent, p["rng_state"], int(p["next_episode"]), curve, p["variant"], p["stage_end"])
    return progress, doc


def check_meta(doc, expected_hash, path):
    """Warns when a checkpoint was produced under a different config hash."""
    found = doc.get("meta", {}).get("config_hash")
    if found is not None and expected_hash is not None and found != expected_hash:
        logger.warning(f"{path}: checkpoint config hash {found} differs from current {expected_hash}")
        return False
    return True
