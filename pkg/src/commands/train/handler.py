# src/commands/train/handler.py
"""Command: train the curriculum agent (and optionally the baseline variants)."""

import os
import json
import logging

from common.events import STATUS_FAILED, STATUS_OK, STATUS_USAGE, log_level, parse_payload, resolve_config
from common.runs import CONFIG_FILE, ensure_mbc, final_checkpoint_path, stage_checkpoint_path, agent_dir
from common.rng import RngStreams
from cul.checkpoint import load_progress, save_checkpoint, check_meta
from cul.config import dump_config
from cul.curriculum import TRAINING_VARIANTS, TrainingConfig, train
from cul.errors import ConfigError, TrainingAbortedError, UnknownCaseError
from cul.evalbench import emit_records

# Configure logging
logger = logging.getLogger()
logger.setLevel(log_level())

# Environment configuration
OUT_DIR = os.environ.get("CUL_OUT_DIR")


def respond(status, body):
    return {"statusCode": status, "body": json.dumps(body)}


def _variants(payload, cfg):
    requested = payload.get("variant")
    if not requested:
        return list(cfg.variants)
    if requested == "all":
        return list(TRAINING_VARIANTS)
    if requested not in TRAINING_VARIANTS:
        raise ConfigError(f"unknown training variant {requested!r}; expected all or one of {sorted(TRAINING_VARIANTS)}",
                          field="variant")
    return [requested]


def _checkpointer(run_dir, variant, meta, schedule):
    def _save(progress):
        if progress.stage_end:
            stage = schedule.stage_of(progress.next_episode - 1)
            path = stage_checkpoint_path(run_dir, variant, stage)
        else:
            path = os.path.join(agent_dir(run_dir, variant), "aborted.npz")
        return save_checkpoint(path, progress.agent, meta=meta, progress=progress)
    return _save


def handler(event, context=None):
    """
    Expects:
      {
        "config": "config/default.yaml",   # optional, built-in defaults otherwise
        "seed": 0, "out": "runs",          # optional overrides
        "episodes_per_stage": 100, "horizon": 667,
        "variant": "proposed",             # optional: proposed | no_mbc | full_randomization | all
        "resume": "runs/<hash>/agents/proposed/stage_1.npz"   # optional, single variant only
      }

    Returns the run directory, per-variant checkpoints and final-stage mean return.
    """
    logger.debug(f"Event received: {json.dumps(event)}")
    logger.debug(f"Environment: CUL_OUT_DIR={OUT_DIR}")

    try:
        payload = parse_payload(event)
        cfg = resolve_config(payload, OUT_DIR)
        variants = _variants(payload, cfg)
        resume_path = payload.get("resume")
        if resume_path and len(variants) != 1:
            raise ConfigError("resume needs exactly one variant", field="resume")

        run_dir = cfg.run_dir()
        os.makedirs(run_dir, exist_ok=True)
        dump_config(cfg, os.path.join(run_dir, CONFIG_FILE))
        mbc = ensure_mbc(cfg, run_dir)
        meta = cfg.meta()
        logger.info(f"Training {variants} in {run_dir} ({cfg.schedule.total_episodes} episodes, horizon {cfg.episode.horizon})")

        results = {}
        for variant in variants:
            tcfg = TrainingConfig(episode=cfg.episode, agent=cfg.agent, ranges=cfg.ranges, nominal=cfg.plant,
                                  variant=variant)
            rngs = RngStreams(cfg.seed, prefix=f"{variant}/")
            resume = None
            if resume_path:
                resume, doc = load_progress(resume_path)
                check_meta(doc, cfg.config_hash, resume_path)
                if resume.variant != variant:
                    raise ConfigError(f"checkpoint belongs to variant {resume.variant!r}, not {variant!r}", field="resume")
            out = train(cfg.schedule, tcfg, rngs, mbc, resume=resume,
                        on_checkpoint=_checkpointer(run_dir, variant, meta, cfg.schedule))
            final = save_checkpoint(final_checkpoint_path(run_dir, variant), out.agent, meta=meta)
            emit_records(run_dir, curves={variant: out.curve}, meta=meta)
            last_stage = cfg.schedule.n_stages - 1
            last_returns = [r.episode_return for r in out.curve if r.stage == last_stage]
            results[variant] = {
                "checkpoints": out.checkpoints,
                "final": final,
                "episodes": len(out.curve),
                "final_stage_mean_return": sum(last_returns) / len(last_returns) if last_returns else None,
                "consolidations": out.snapshot.task_count if out.snapshot is not None else 0,
            }
            logger.info(f"Variant {variant} done: {results[variant]['episodes']} episodes")

        response = {"run_dir": run_dir, "config_hash": cfg.config_hash, "seed": cfg.seed, "variants": results}
        logger.debug(f"Returning successful response: {json.dumps(response)}")
        return respond(STATUS_OK, response)

    except (ConfigError, UnknownCaseError) as e:
        logger.warning(f"Usage error: {e}")
        return respond(STATUS_USAGE, {"error": str(e)})
    except TrainingAbortedError as e:
        logger.error(f"Training aborted: {e} (checkpoint {e.checkpoint_path})")
        return respond(STATUS_FAILED, {"error": str(e), "checkpoint": e.checkpoint_path})
    except Exception as e:
        logger.error(f"Unhandled error: {str(e)}", exc_info=True)
        return respond(STATUS_FAILED, {"error": str(e)})
