import os

import pytest

from cul import config
from cul.config import RunConfig
from cul.errors import ConfigError

DEFAULT_YAML = os.path.join(os.path.dirname(__file__), "..", "..", "..", "config", "default.yaml")


def test_shipped_defaults_match_builtin_defaults():
    cfg = config.load_config(DEFAULT_YAML)
    assert cfg.config_hash == RunConfig().config_hash
    assert cfg.agent.buffer_size == 100_000
    assert cfg.ranges.m_b == (0.116, 0.348)


def test_empty_document_gives_defaults():
    assert config.parse_config("").config_hash == RunConfig().config_hash


def test_hash_is_short_hex_and_tracks_training_inputs():
    base = RunConfig()
    assert len(base.config_hash) == 16
    int(base.config_hash, 16)
    assert config.apply_overrides(base, seed=1).config_hash != base.config_hash
    assert config.apply_overrides(base, horizon=10).config_hash != base.config_hash


def test_hash_ignores_output_and_selection():
    base = RunConfig()
    moved = config.apply_overrides(base, out_dir="/elsewhere", trials=3, variants=["no_mbc"], case="heavy_body")
    assert moved.config_hash == base.config_hash
    assert moved.run_dir() == os.path.join("/elsewhere", base.config_hash)
    assert moved.meta() == {"config_hash": base.config_hash, "seed": 0}


def test_unknown_key_reports_path_and_line():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("seed: 1\nagent:\n  hiden: 4\n")
    assert exc.value.field == "agent.hiden"
    assert exc.value.line == 3


def test_wrong_type_reports_field():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("trials: many\n")
    assert exc.value.field == "trials" and exc.value.line == 1


def test_invalid_yaml_reports_line():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("seed: 1\nagent: [1, 2\n")
    assert exc.value.line is not None


def test_out_of_range_values_are_config_errors():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("agent:\n  gamma: 0\n")
    assert exc.value.field == "agent"
    with pytest.raises(ConfigError) as exc:
        config.parse_config("ranges:\n  m_b: [2, 1]\n")
    assert exc.value.field == "ranges"
    with pytest.raises(ConfigError):
        config.parse_config("variants: [bogus]\n")


def test_nested_values_are_coerced():
    cfg = config.parse_config("episode:\n  horizon: 50\n  cost:\n    r: 1e-3\nranges:\n  delta: [0, 0.01]\n")
    assert cfg.episode.horizon == 50 and isinstance(cfg.episode.horizon, int)
    assert cfg.episode.cost.r == 0.001
    assert cfg.ranges.delta == (0.0, 0.01)


def test_overrides_leave_unset_fields_alone():
    cfg = config.apply_overrides(RunConfig(), episodes_per_stage=3, trials=4)
    assert cfg.schedule.episodes_per_stage == 3 and cfg.schedule.n_stages == 5
    assert cfg.trials == 4 and cfg.seed == 0
    with pytest.raises(ConfigError):
        config.apply_overrides(RunConfig(), trials=0)


def test_dumped_config_reloads_with_same_hash(tmp_path):
    cfg = config.apply_overrides(RunConfig(), seed=7, horizon=30)
    path = config.dump_config(cfg, str(tmp_path / "config.yaml"))
    with open(path) as fh:
        assert fh.readline().strip() == f"# config_hash: {cfg.config_hash}"
    assert config.load_config(path).config_hash == cfg.config_hash


def test_dumped_config_does_not_depend_on_out_dir(tmp_path):
    texts = []
    for name in ("a", "b"):
        cfg = config.apply_overrides(RunConfig(), seed=7, out_dir=str(tmp_path / name))
        path = config.dump_config(cfg, str(tmp_path / f"{name}.yaml"))
        with open(path) as fh:
            texts.append(fh.read())
    assert texts[0] == texts[1]
    assert "out_dir" not in texts[0]


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        config.load_config(str(tmp_path / "absent.yaml"))
