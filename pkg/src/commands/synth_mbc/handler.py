# src/commands/synth_mbc/handler.py
"""Command: synthesize the model-based controller and export its matrices."""

import os
import json
import logging

from common.events import STATUS_FAILED, STATUS_OK, STATUS_USAGE, log_level, parse_payload, resolve_config
from common.runs import build_mbc, mbc_path
from cul.dynamics import linearize_nominal
from cul.errors import ConfigError, UnknownCaseError
from cul.lincontrol import closed_loop_spectral_radius, export_controller

# Configure logging
logger = logging.getLogger()
logger.setLevel(log_level())

# Environment configuration
OUT_DIR = os.environ.get("CUL_OUT_DIR")


def respond(status, body):
    return {"statusCode": status, "body": json.dumps(body)}


def handler(event, context=None):
    """
    Expects: {"config": ..., "seed": ..., "out": ..., "output": "path/to/mbc.txt"}  (all optional)

    Writes A_c, B_c, C_c, D_c and dt (default <run_dir>/mbc.txt) and returns the
    nominal closed-loop spectral radius.
    """
    logger.debug(f"Event received: {json.dumps(event)}")
    logger.debug(f"Environment: CUL_OUT_DIR={OUT_DIR}")

    try:
        payload = parse_payload(event)
        cfg = resolve_config(payload, OUT_DIR)
        ctrl = build_mbc(cfg)
        radius = closed_loop_spectral_radius(linearize_nominal(cfg.plant, cfg.episode.dt), ctrl)

        path = payload.get("output") or mbc_path(cfg.run_dir())
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        export_controller(ctrl, path, header=[f"config_hash={cfg.config_hash}", f"seed={cfg.seed}",
                                              f"spectral_radius={radius:.17g}"])

        response = {"path": path, "order": ctrl.order, "spectral_radius": radius, "config_hash": cfg.config_hash}
        logger.debug(f"Returning successful response: {json.dumps(response)}")
        return respond(STATUS_OK, response)

    except (ConfigError, UnknownCaseError) as e:
        logger.warning(f"Usage error: {e}")
        return respond(STATUS_USAGE, {"error": str(e)})
    except Exception as e:
        logger.error(f"Unhandled error: {str(e)}", exc_info=True)
        return respond(STATUS_FAILED, {"error": str(e)})
