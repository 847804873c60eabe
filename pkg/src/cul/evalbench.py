# src/cul/evalbench.py
"""
Baseline comparison on fixed corner-case plants, the Monte Carlo robustness study,
and the data files both produce.
"""

import os
import logging
from dataclasses import dataclass, field

import numpy as np

from common.rng import trial_stream
from common.serialization import dumps, write_csv
from cul.curriculum import EVAL, ControlMode, EpisodeSettings, run_episode
from cul.dynamics import N_STAGES, PlantParams, UncertaintyRanges, sample_plant
from cul.errors import IncompleteRecordError, UnknownCaseError

logger = logging.getLogger(__name__)

# evaluation variant -> (control mode, trained agent it needs); order is the table order
EVAL_VARIANTS = {
    "proposed": (ControlMode.RESIDUAL, "proposed"),
    "no_mbc": (ControlMode.RL_ONLY, "no_mbc"),
    "full_randomization": (ControlMode.RESIDUAL, "full_randomization"),
    "only_mbc": (ControlMode.MBC_ONLY, None),
    "no_control": (ControlMode.NONE, None),
}
VARIANT_LABELS = {
    "proposed": "Proposed",
    "no_mbc": "No MBC",
    "full_randomization": "Full randomization",
    "only_mbc": "Only MBC",
    "no_control": "No control",
}

# named corner cases: key -> min | max | nominal; unlisted keys stay nominal
CORNER_CASES = {
    "nominal": {},
    "heavy_body": {
        "m_b": "max", "m_e": "max", "c_g": "max", "c_d": "min", "c_c": "max",
        "yr_seg1": "max", "yr_seg2": "min", "delta": "min",
    },
    "light_body": {
        "m_b": "min", "m_e": "min", "c_g": "min", "c_d": "max", "c_c": "min",
        "yr_seg1": "min", "yr_seg2": "max", "delta": "max",
    },
    "light_body_heavy_actuator": {
        "m_b": "min", "m_e": "max", "c_g": "min", "c_d": "min", "c_c": "max",
        "yr_seg1": "min", "yr_seg2": "max", "delta": "max",
    },
}
# alternate names accepted on the command line
CASE_ALIASES = {
    "fig5": "nominal",
    "fig6": "heavy_body",
    "fig7": "light_body",
    "fig8": "light_body_heavy_actuator",
}
PIN_CHOICES = ("min", "max", "nominal")


@dataclass
class Metric:
    variant: str
    norm: float
    episode_return: float
    terminal_error: float
    peak_x_b: float

    def to_dict(self):
        return {
            "variant": self.variant, "norm": self.norm, "episode_return": self.episode_return,
            "terminal_error": self.terminal_error, "peak_x_b": self.peak_x_b,
        }


@dataclass
class McSummary:
    variants: list
    norms: dict            # variant -> per-trial norms
    mean: dict
    std: dict
    n_trials: int
    mean_trajectory: dict  # variant -> per-step mean x_B
    trial_params: list = field(default_factory=list)

    def to_dict(self):
        return {
            "n_trials": self.n_trials,
            "variants": {
                v: {"mean": self.mean[v], "std": self.std[v], "norms": list(self.norms[v])}
                for v in self.variants
            },
        }


def parse_case_spec(spec):
    """'m_b=max,delta=min' -> {'m_b': 'max', 'delta': 'min'}."""
    pins = {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        if "=" not in item:
            raise UnknownCaseError(f"malformed case entry {item!r}; expected key=min|max|nominal")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in UncertaintyRanges.INTERVALS:
            raise UnknownCaseError(f"unknown case key {key!r}; expected one of {', '.join(UncertaintyRanges.INTERVALS)}")
        if value not in PIN_CHOICES:
            raise UnknownCaseError(f"case key {key!r}: value must be min, max or nominal, got {value!r}")
        pins[key] = value
    return pins


def canonical_case(case):
    return CASE_ALIASES.get(case, case)


def resolve_case(case, ranges=None, nominal=None):
    """
    Plant parameters for a named corner case or an inline 'key=min|max|nominal' list.

    The base is the nominal plant without backlash; 'delta=nominal' restores the
    nominal width.
    """
    ranges = ranges or UncertaintyRanges()
    base = nominal if nominal is not None else PlantParams.nominal()
    case = canonical_case(case)
    if case in CORNER_CASES:
        pins = CORNER_CASES[case]
    elif "=" in case:
        pins = parse_case_spec(case)
    else:
        raise UnknownCaseError(f"unknown case {case!r}; expected one of {', '.join([*CORNER_CASES, *CASE_ALIASES])} or key=min|max|nominal")
    changes = {"delta": 0.0}
    for key, which in pins.items():
        changes[key] = getattr(base, key) if which == "nominal" else ranges.bound(key, which)
    return base.replace(**changes).validate()


def tracking_error_norm(rec):
    """sqrt(sum e_k^2) over the raw samples."""
    if rec.aborted or len(rec.e) == 0 or not np.all(np.isfinite(rec.e)):
        raise IncompleteRecordError(f"record is incomplete{': ' + rec.diagnostic if rec.diagnostic else ''}")
    return float(np.sqrt(np.sum(rec.e * rec.e)))


def metric_of(variant, rec):
    return Metric(
        variant=variant,
        norm=tracking_error_norm(rec),
        episode_return=float(rec.episode_return),
        terminal_error=float(abs(rec.e[-1])),
        peak_x_b=float(np.max(np.abs(rec.y))),
    )


def summarize_norms(values):
    """(mean, sample std); a single value has std 0."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no values to summarize")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def available_variants(agents, variants=None):
    """Requested variants whose trained agent is present; the rest are skipped with a warning."""
    agents = agents or {}
    out = []
    for name in variants or EVAL_VARIANTS:
        if name not in EVAL_VARIANTS:
            raise ValueError(f"unknown evaluation variant {name!r}; expected one of {', '.join(EVAL_VARIANTS)}")
        _, agent_key = EVAL_VARIANTS[name]
        if agent_key is not None and agents.get(agent_key) is None:
            logger.warning(f"Skipping variant {name}: no trained {agent_key} agent")
            continue
        out.append(name)
    return out


def evaluate_case(params, mbc, agents, variants=None, settings=None):
    """Every variant on the same plant and reference, eval mode. Returns (metrics, records)."""
    settings = settings or EpisodeSettings()
    metrics, records = [], {}
    for name in available_variants(agents, variants):
        mode, agent_key = EVAL_VARIANTS[name]
        agent = agents.get(agent_key) if agent_key else None
        rec = run_episode(params, mbc if mode.uses_mbc else None, agent, EVAL, mode, None, settings)
        records[name] = rec
        metrics.append(metric_of(name, rec))
        logger.debug(f"evaluate_case: {name} norm={metrics[-1].norm:.6g}")
    return metrics, records


def monte_carlo(n_trials, ranges, mbc, agents, master_seed, settings=None, nominal=None, variants=None):
    """
    n_trials plants drawn with every uncertainty active; all variants run on each
    trial's plant. Trial i draws from its own stream (master_seed, 'montecarlo', i).
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    settings = settings or EpisodeSettings()
    names = available_variants(agents, variants)
    norms = {v: [] for v in names}
    traj_sum = {v: np.zeros(settings.horizon) for v in names}
    trial_params = []

    for i in range(n_trials):
        params = sample_plant(N_STAGES - 1, ranges, trial_stream(master_seed, "montecarlo", i), nominal)
        trial_params.append(params)
        metrics, records = evaluate_case(params, mbc, agents, names, settings)
        for m in metrics:
            norms[m.variant].append(m.norm)
            traj_sum[m.variant] += records[m.variant].y
        logger.info(f"monte_carlo: trial {i + 1}/{n_trials} " + " ".join(f"{m.variant}={m.norm:.4g}" for m in metrics))

    mean, std = {}, {}
    for v in names:
        mean[v], std[v] = summarize_norms(norms[v])
    return McSummary(
        variants=names,
        norms={v: np.array(norms[v]) for v in names},
        mean=mean,
        std=std,
        n_trials=n_trials,
        mean_trajectory={v: traj_sum[v] / n_trials for v in names},
        trial_params=trial_params,
    )


def write_case_records(path, records, meta=None):
    """t, y^r, then x_B and u per variant."""
    names = list(records)
    header = ["t", "y_r"] + [f"x_b_{v}" for v in names] + [f"u_{v}" for v in names]
    rows = []
    if names:
        first = records[names[0]]
        for k in range(len(first)):
            row = [float(first.t[k]), float(first.y_r[k])]
            row += [float(records[v].y[k]) for v in names]
            row += [float(records[v].u[k]) for v in names]
            rows.append(row)
    write_csv(path, header, rows, meta)
    return path


def write_reward_curve(path, curve, meta=None):
    rows = [[r.episode, r.stage, float(r.episode_return), r.plant_index] for r in curve]
    write_csv(path, ["episode", "stage", "return", "plant_index"], rows, meta)
    return path


def write_metric_table(path, metrics, meta=None):
    rows = [[VARIANT_LABELS[m.variant], m.norm] for m in metrics]
    write_csv(path, ["variant", "norm"], rows, meta)
    return path


def write_mc_table(path, summary, meta=None):
    rows = [[VARIANT_LABELS[v], summary.mean[v], summary.std[v], summary.n_trials] for v in summary.variants]
    write_csv(path, ["variant", "mean", "std", "trials"], rows, meta)
    return path


def write_mc_trials(path, summary, meta=None):
    keys = list(UncertaintyRanges.INTERVALS)
    header = ["trial"] + keys + [f"norm_{v}" for v in summary.variants]
    rows = []
    for i, params in enumerate(summary.trial_params):
        rows.append([i] + [float(getattr(params, k)) for k in keys]
                    + [float(summary.norms[v][i]) for v in summary.variants])
    write_csv(path, header, rows, meta)
    return path


def write_mean_trajectories(path, summary, dt, meta=None):
    header = ["t"] + [f"x_b_{v}" for v in summary.variants]
    n = len(next(iter(summary.mean_trajectory.values()))) if summary.variants else 0
    rows = [[k * dt] + [float(summary.mean_trajectory[v][k]) for v in summary.variants] for k in range(n)]
    write_csv(path, header, rows, meta)
    return path


def write_summary_document(path, tree, meta=None):
    doc = {"meta": dict(meta or {}), **tree}
    try:
        with open(path, "w") as fh:
            fh.write(dumps(doc) + "\n")
    except OSError as e:
        raise OSError(f"failed writing {path}: {e}") from e
    return path


def emit_records(out_dir, records=None, metrics=None, summary=None, curves=None, meta=None, dt=0.006):
    """
    Writes whatever is given under out_dir and returns the written paths:

      eval/<case>/trajectories.csv, eval/<case>/summary.csv, eval/<case>/summary.json
      montecarlo/trials.csv, montecarlo/summary.csv, montecarlo/summary.json,
      montecarlo/mean_trajectories.csv
      reward_curve_<variant>.csv
    """
    paths = []
    for case, recs in (records or {}).items():
        case_dir = os.path.join(out_dir, "eval", case)
        os.makedirs(case_dir, exist_ok=True)
        paths.append(write_case_records(os.path.join(case_dir, "trajectories.csv"), recs, meta))
    for case, ms in (metrics or {}).items():
        case_dir = os.path.join(out_dir, "eval", case)
        os.makedirs(case_dir, exist_ok=True)
        paths.append(write_metric_table(os.path.join(case_dir, "summary.csv"), ms, meta))
        tree = {"case": case, "variants": {m.variant: m.to_dict() for m in ms}}
        paths.append(write_summary_document(os.path.join(case_dir, "summary.json"), tree, meta))
    if summary is not None:
        mc_dir = os.path.join(out_dir, "montecarlo")
        os.makedirs(mc_dir, exist_ok=True)
        paths.append(write_mc_trials(os.path.join(mc_dir, "trials.csv"), summary, meta))
        paths.append(write_mc_table(os.path.join(mc_dir, "summary.csv"), summary, meta))
        paths.append(write_summary_document(os.path.join(mc_dir, "summary.json"), summary.to_dict(), meta))
        paths.append(write_mean_trajectories(os.path.join(mc_dir, "mean_trajectories.csv"), summary, dt, meta))
    for variant, curve in (curves or {}).items():
        paths.append(write_reward_curve(os.path.join(out_dir, f"reward_curve_{variant}.csv"), curve, meta))
    logger.info(f"emit_records: wrote {len(paths)} files under {out_dir}")
    return paths
