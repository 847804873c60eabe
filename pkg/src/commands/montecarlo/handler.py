# src/commands/montecarlo/handler.py
"""Command: Monte Carlo robustness study over fully randomized plants."""

import os
import json
import logging

from common.events import STATUS_FAILED, STATUS_OK, STATUS_USAGE, log_level, parse_payload, resolve_config
from common.runs import ensure_mbc, load_agents
from cul.errors import ConfigError, UnknownCaseError
from cul.evalbench import emit_records, monte_carlo

# Configure logging
logger = logging.getLogger()
logger.setLevel(log_level())

# Environment configuration
OUT_DIR = os.environ.get("CUL_OUT_DIR")


def respond(status, body):
    return {"statusCode": status, "body": json.dumps(body)}


def handler(event, context=None):
    """
    Expects: {"checkpoint": "runs/<hash>", "trials": 100, "seed": 0, "config": ..., "out": ...}

    Writes montecarlo/{trials,summary,mean_trajectories}.csv and summary.json;
    returns per-variant mean and std of the tracking-error norm.
    """
    logger.debug(f"Event received: {json.dumps(event)}")
    logger.debug(f"Environment: CUL_OUT_DIR={OUT_DIR}")

    try:
        payload = parse_payload(event)
        cfg = resolve_config(payload, OUT_DIR)
        run_dir = payload.get("checkpoint") or cfg.run_dir()

        mbc = ensure_mbc(cfg, run_dir)
        agents = load_agents(cfg, run_dir)
        logger.info(f"Monte Carlo: {cfg.trials} trials, seed {cfg.seed}")
        summary = monte_carlo(cfg.trials, cfg.ranges, mbc, agents, cfg.seed, settings=cfg.episode, nominal=cfg.plant)
        paths = emit_records(run_dir, summary=summary, meta=cfg.meta(), dt=cfg.episode.dt)

        response = {
            "run_dir": run_dir,
            "trials": summary.n_trials,
            "variants": {v: {"mean": summary.mean[v], "std": summary.std[v]} for v in summary.variants},
            "files": paths,
        }
        logger.debug(f"Returning successful response: {json.dumps(response)}")
        return respond(STATUS_OK, response)

    except (ConfigError, UnknownCaseError) as e:
        logger.warning(f"Usage error: {e}")
        return respond(STATUS_USAGE, {"error": str(e)})
    except Exception as e:
        logger.error(f"Unhandled error: {str(e)}", exc_info=True)
        return respond(STATUS_FAILED, {"error": str(e)})
