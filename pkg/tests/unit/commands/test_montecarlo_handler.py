import json
import os

import numpy as np

import commands.montecarlo.handler as mc_mod
from common.serialization import read_csv
from cul.dynamics import PlantParams
from cul.evalbench import McSummary


def make_event(payload):
    return {"body": json.dumps(payload)}


def test_montecarlo_runs_trials_and_writes_tables(patch_module, tmp_path, tiny_config_file):
    patch_module(mc_mod, OUT_DIR=str(tmp_path / "runs"))
    resp = mc_mod.handler(make_event({"config": tiny_config_file, "trials": 2}), None)
    assert resp["statusCode"] == 0
    body = json.loads(resp["body"])
    assert body["trials"] == 2
    assert set(body["variants"]) == {"only_mbc", "no_control"}
    _, header, rows = read_csv(os.path.join(body["run_dir"], "montecarlo", "trials.csv"))
    assert len(rows) == 2 and header[-2:] == ["norm_only_mbc", "norm_no_control"]


def test_montecarlo_passes_seed_and_trials(patch_module, tmp_path, tiny_config_file, mock_monte_carlo):
    mock_monte_carlo.return_value = McSummary(
        variants=["only_mbc"], norms={"only_mbc": np.array([0.25])}, mean={"only_mbc": 0.25},
        std={"only_mbc": 0.0}, n_trials=1, mean_trajectory={"only_mbc": np.zeros(20)},
        trial_params=[PlantParams.nominal()],
    )
    patch_module(mc_mod, OUT_DIR=str(tmp_path / "runs"), monte_carlo=mock_monte_carlo)
    resp = mc_mod.handler(make_event({"config": tiny_config_file, "trials": 1, "seed": 9}), None)
    assert resp["statusCode"] == 0
    args, kwargs = mock_monte_carlo.call_args
    assert args[0] == 1 and args[4] == 9
    assert kwargs["settings"].horizon == 20
    assert json.loads(resp["body"])["variants"]["only_mbc"] == {"mean": 0.25, "std": 0.0}


def test_montecarlo_zero_trials_is_usage_error(patch_module, tmp_path):
    patch_module(mc_mod, OUT_DIR=str(tmp_path / "runs"))
    resp = mc_mod.handler(make_event({"trials": 0}), None)
    assert resp["statusCode"] == 2
