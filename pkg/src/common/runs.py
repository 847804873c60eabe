# src/common/runs.py
"""Run directory layout: <out>/<config_hash>/ holding every artifact of one configuration."""

import os
import re
import logging

from cul.checkpoint import check_meta, load_checkpoint
from cul.curriculum import TRAINING_VARIANTS
from cul.dynamics import linearize_nominal
from cul.lincontrol import export_controller, import_controller, synthesize_mbc

logger = logging.getLogger(__name__)

MBC_FILE = "mbc.txt"
CONFIG_FILE = "config.yaml"


def mbc_path(run_dir):
    return os.path.join(run_dir, MBC_FILE)


def agent_dir(run_dir, variant):
    return os.path.join(run_dir, "agents", variant)


def stage_checkpoint_path(run_dir, variant, stage):
    return os.path.join(agent_dir(run_dir, variant), f"stage_{stage}.npz")


def final_checkpoint_path(run_dir, variant):
    return os.path.join(agent_dir(run_dir, variant), "final.npz")


def case_dirname(case):
    """Directory-safe name for a named case or an inline case spec."""
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", case).strip("_") or "case"


def build_mbc(cfg):
    model = linearize_nominal(cfg.plant, cfg.episode.dt)
    return synthesize_mbc(model, cfg.synthesis)


def ensure_mbc(cfg, run_dir):
    """Controller stored in the run directory, synthesized and written first if missing."""
    path = mbc_path(run_dir)
    if os.path.exists(path):
        ctrl, header = import_controller(path)
        logger.debug(f"Loaded controller from {path} ({'; '.join(header)})")
        return ctrl
    os.makedirs(run_dir, exist_ok=True)
    ctrl = build_mbc(cfg)
    export_controller(ctrl, path, header=[f"config_hash={cfg.config_hash}", f"seed={cfg.seed}"])
    return ctrl


def load_agents(cfg, run_dir):
    """Final agents of every trained variant present under run_dir."""
    agents = {}
    for variant in TRAINING_VARIANTS:
        path = final_checkpoint_path(run_dir, variant)
        if not os.path.exists(path):
            logger.debug(f"No final checkpoint for {variant} at {path}")
            continue
        agent, doc = load_checkpoint(path)
        check_meta(doc, cfg.config_hash, path)
        agents[variant] = agent
    logger.info(f"Loaded agents: {sorted(agents) or 'none'} from {run_dir}")
    return agents
