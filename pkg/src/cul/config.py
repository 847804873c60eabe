# src/cul/config.py
"""
Run configuration: a dataclass tree loaded from YAML with strict key checking.

Unknown keys anywhere are rejected with the dotted key path and YAML line. The
config hash covers everything that shapes training; output location and the
evaluation/training selections are excluded so every command of one run lands
in the same run directory.
"""

import os
import hashlib
import logging
from dataclasses import dataclass, field, fields, is_dataclass, asdict, replace

import yaml

from common.serialization import dumps, to_builtin
from cul.agent import AgentSettings
from cul.curriculum import EpisodeSettings, StageSchedule, TRAINING_VARIANTS
from cul.dynamics import PlantParams, UncertaintyRanges
from cul.errors import ConfigError
from cul.lincontrol import SynthesisWeights

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "runs"
HASH_EXCLUDED = ("out_dir", "variants", "trials", "case")


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = DEFAULT_OUT_DIR
    variants: list = field(default_factory=lambda: ["proposed"])
    trials: int = 100
    case: str = "nominal"
    plant: PlantParams = field(default_factory=PlantParams)
    ranges: UncertaintyRanges = field(default_factory=UncertaintyRanges)
    schedule: StageSchedule = field(default_factory=StageSchedule)
    agent: AgentSettings = field(default_factory=AgentSettings)
    episode: EpisodeSettings = field(default_factory=EpisodeSettings)
    synthesis: SynthesisWeights = field(default_factory=SynthesisWeights)

    def validate(self):
        checks = (
            ("plant", self.plant.validate),
            ("schedule", self.schedule.validate),
            ("agent", self.agent.validate),
            ("episode", self.episode.validate),
            ("synthesis", self.synthesis.validate),
        )
        for name, check in checks:
            try:
                check()
            except ValueError as e:
                raise ConfigError(str(e), field=name) from e
        unknown = [v for v in self.variants if v not in TRAINING_VARIANTS]
        if unknown:
            raise ConfigError(f"unknown training variant(s) {unknown}; expected {sorted(TRAINING_VARIANTS)}", field="variants")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1", field="trials")
        return self

    def to_dict(self):
        out = asdict(self)
        out["ranges"] = self.ranges.to_dict()
        return to_builtin(out)

    def hashed_dict(self):
        return {k: v for k, v in self.to_dict().items() if k not in HASH_EXCLUDED}

    @property
    def config_hash(self):
        return config_hash(self)

    def run_dir(self):
        return os.path.join(self.out_dir, self.config_hash)

    def meta(self):
        """Provenance embedded in every emitted file."""
        return {"config_hash": self.config_hash, "seed": self.seed}


def config_hash(cfg):
    """First 16 hex digits of SHA-256 over the canonical JSON of the hashed fields."""
    return hashlib.sha256(dumps(cfg.hashed_dict()).encode("utf-8")).hexdigest()[:16]


def _key_lines(node, prefix=""):
    """dotted key path -> 1-based line, from the composed YAML node tree."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}{key_node.value}"
            lines[path] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, path + "."))
    return lines


def _coerce(value, kind, path, lines):
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError(f"expected true/false, got {value!r}")
            return value
        if kind is int:
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError(f"expected an integer, got {value!r}")
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError(f"expected a number, got {value!r}")
            return float(value)
        if kind is str:
            return str(value)
        if kind is tuple:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise TypeError(f"expected [min, max], got {value!r}")
            return tuple(float(v) for v in value)
        if kind is list:
            return list(value) if isinstance(value, (list, tuple)) else [value]
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), field=path, line=lines.get(path)) from e
    return value


def _build(cls, data, prefix, lines):
    """Instantiate dataclass `cls` from a mapping, recursing into nested dataclasses."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", field=prefix.rstrip(".") or None,
                          line=lines.get(prefix.rstrip(".")))
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            path = f"{prefix}{key}"
            raise ConfigError(f"unknown key {key!r}", field=path, line=lines.get(path))
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}{name}"
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, path + ".", lines)
        else:
            kind = known[name].type if isinstance(known[name].type, type) else type(current)
            kwargs[name] = _coerce(value, kind, path, lines)
    try:
        return replace(defaults, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e), field=prefix.rstrip(".") or None, line=lines.get(prefix.rstrip("."))) from e


def parse_config(text, source="<string>"):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{source}: invalid YAML: {getattr(e, 'problem', None) or e}", line=line) from e
    lines = _key_lines(node) if node is not None else {}
    cfg = _build(RunConfig, data, "", lines)
    return cfg.validate()


def load_config(path=None):
    """Defaults when path is None, else the YAML file at path."""
    if path is None:
        logger.debug("load_config: using built-in defaults")
        return RunConfig().validate()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    logger.debug(f"load_config: {path}")
    return parse_config(text, source=path)


def apply_overrides(cfg, seed=None, out_dir=None, episodes_per_stage=None, horizon=None,
                    trials=None, variants=None, case=None):
    """Command-line overrides; None leaves a field untouched."""
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if out_dir:
        changes["out_dir"] = str(out_dir)
    if trials is not None:
        changes["trials"] = int(trials)
    if variants:
        changes["variants"] = list(variants)
    if case:
        changes["case"] = str(case)
    if episodes_per_stage is not None:
        changes["schedule"] = replace(cfg.schedule, episodes_per_stage=int(episodes_per_stage))
    if horizon is not None:
        changes["episode"] = replace(cfg.episode, horizon=int(horizon))
    return replace(cfg, **changes).validate()


def dump_config(cfg, path):
    """Resolved config without out_dir; the file already lives inside the output tree."""
    doc = {k: v for k, v in cfg.to_dict().items() if k != "out_dir"}
    try:
        with open(path, "w") as fh:
            fh.write(f"# config_hash: {cfg.config_hash}\n")
            yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=False)
    except OSError as e:
        raise OSError(f"failed writing {path}: {e}") from e
    return path
