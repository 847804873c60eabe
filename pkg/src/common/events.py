# src/common/events.py
import os
import json
import logging

from cul.config import apply_overrides, load_config

logger = logging.getLogger(__name__)

# exit statuses shared by every command
STATUS_OK = 0
STATUS_FAILED = 1
STATUS_USAGE = 2


def parse_payload(event):
    """
    Command arguments from an event: a JSON string or dict under 'body', else the
    event itself.
    """
    event = event or {}
    body = event.get("body")
    if isinstance(body, str) and body:
        return json.loads(body)
    if isinstance(body, dict):
        return dict(body)
    return {k: v for k, v in event.items() if k != "body"}


def resolve_config(payload, default_out_dir=None):
    """
    Config file (or defaults) with the payload's overrides applied. Output directory:
    payload 'out', else `default_out_dir` (CUL_OUT_DIR), else the config's out_dir.
    """
    cfg = load_config(payload.get("config"))
    variants = payload.get("variants")
    cfg = apply_overrides(
        cfg,
        seed=payload.get("seed"),
        out_dir=payload.get("out") or default_out_dir,
        episodes_per_stage=payload.get("episodes_per_stage"),
        horizon=payload.get("horizon"),
        trials=payload.get("trials"),
        variants=variants,
        case=payload.get("case"),
    )
    logger.debug(f"Resolved config {cfg.config_hash} (seed {cfg.seed}) -> {cfg.run_dir()}")
    return cfg


def log_level(default="INFO"):
    return getattr(logging, os.environ.get("CUL_LOG_LEVEL", default).upper(), logging.INFO)
