import os
import pytest
from dataclasses import replace
from unittest.mock import MagicMock

from common.rng import RngStreams, rng_stream
from cul.agent import AgentSettings, create_agent
from cul.curriculum import EpisodeSettings
from cul.dynamics import PlantParams, linearize_nominal
from cul.lincontrol import synthesize_mbc


@pytest.fixture(autouse=True)
def env_vars(monkeypatch, tmp_path):
    # sensible defaults for handlers
    monkeypatch.setenv("CUL_OUT_DIR", os.environ.get("CUL_OUT_DIR", str(tmp_path / "runs")))
    monkeypatch.setenv("CUL_LOG_LEVEL", os.environ.get("CUL_LOG_LEVEL", "INFO"))
    return monkeypatch


@pytest.fixture
def nominal():
    return PlantParams.nominal()


@pytest.fixture
def linear_nominal(nominal):
    return nominal.replace(delta=0.0)


@pytest.fixture(scope="session")
def model():
    return linearize_nominal(PlantParams.nominal(), 0.006)


@pytest.fixture(scope="session")
def mbc(model):
    return synthesize_mbc(model)


@pytest.fixture
def tiny_settings():
    # small nets and buffer so learning starts within a few steps
    return AgentSettings(hidden=8, batch_size=8, buffer_size=64, ewc_batch=16, ewc_samples=64)


@pytest.fixture
def short_episode():
    return replace(EpisodeSettings(), horizon=40)


@pytest.fixture
def rngs():
    return RngStreams(7, prefix="test/")


@pytest.fixture
def tiny_agent(tiny_settings):
    return create_agent(6, tiny_settings, rng_stream(7, "test/init"))


@pytest.fixture
def patch_module(monkeypatch):
    """
    Replace module-level attributes of a handler module after import, e.g. its
    OUT_DIR or a library function it calls.
    """
    def _apply(module, **attrs):
        for name, value in attrs.items():
            monkeypatch.setattr(module, name, value)
        return module
    return _apply


TINY_CONFIG = """\
seed: 3
agent:
  hidden: 8
  batch_size: 8
  buffer_size: 64
  ewc_batch: 16
  ewc_samples: 64
schedule:
  n_stages: 2
  episodes_per_stage: 1
episode:
  horizon: 20
"""


@pytest.fixture
def tiny_config_file(tmp_path):
    """Two one-episode stages of 20 steps with a small agent."""
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_CONFIG)
    return str(path)


@pytest.fixture
def mock_monte_carlo():
    m = MagicMock()
    return m
