# src/commands/eval/handler.py
"""Command: compare every control variant on one corner-case plant."""

import os
import json
import logging

from common.events import STATUS_FAILED, STATUS_OK, STATUS_USAGE, log_level, parse_payload, resolve_config
from common.runs import case_dirname, ensure_mbc, load_agents
from cul.errors import ConfigError, UnknownCaseError
from cul.evalbench import canonical_case, emit_records, evaluate_case, resolve_case

# Configure logging
logger = logging.getLogger()
logger.setLevel(log_level())

# Environment configuration
OUT_DIR = os.environ.get("CUL_OUT_DIR")


def respond(status, body):
    return {"statusCode": status, "body": json.dumps(body)}


def handler(event, context=None):
    """
    Expects:
      {
        "checkpoint": "runs/<hash>",     # optional run directory, default from the config hash
        "case": "heavy_body",            # named case or "m_b=max,delta=min"; default from config
        "config": ..., "seed": ..., "out": ..., "horizon": ...
      }

    Writes eval/<case>/{trajectories,summary}.csv and summary.json; returns the metrics.
    """
    logger.debug(f"Event received: {json.dumps(event)}")
    logger.debug(f"Environment: CUL_OUT_DIR={OUT_DIR}")

    try:
        payload = parse_payload(event)
        cfg = resolve_config(payload, OUT_DIR)
        params = resolve_case(cfg.case, cfg.ranges, cfg.plant)
        run_dir = payload.get("checkpoint") or cfg.run_dir()
        logger.debug(f"Case {cfg.case}: {params.to_dict()}")

        mbc = ensure_mbc(cfg, run_dir)
        agents = load_agents(cfg, run_dir)
        metrics, records = evaluate_case(params, mbc, agents, settings=cfg.episode)

        case = case_dirname(canonical_case(cfg.case))
        paths = emit_records(run_dir, records={case: records}, metrics={case: metrics},
                             meta=cfg.meta(), dt=cfg.episode.dt)

        response = {
            "case": cfg.case,
            "run_dir": run_dir,
            "metrics": [m.to_dict() for m in metrics],
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
