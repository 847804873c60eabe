import json
import os
from unittest.mock import MagicMock

import commands.synth_mbc.handler as synth_mod
from cul.errors import UnstableClosedLoopError
from cul.lincontrol import import_controller


def make_event(payload):
    return {"body": json.dumps(payload)}


def test_synth_mbc_exports_to_given_path(patch_module, tmp_path):
    patch_module(synth_mod, OUT_DIR=str(tmp_path / "runs"))
    target = str(tmp_path / "ctrl" / "mbc.txt")
    resp = synth_mod.handler(make_event({"output": target}), None)
    assert resp["statusCode"] == 0
    body = json.loads(resp["body"])
    assert body["path"] == target
    assert body["order"] == 7
    assert 0.0 < body["spectral_radius"] < 1.0
    ctrl, header = import_controller(target)
    assert ctrl.order == 7
    assert f"config_hash={body['config_hash']}" in header
    assert any(line.startswith("spectral_radius=") for line in header)


def test_synth_mbc_defaults_to_run_directory(patch_module, tmp_path):
    patch_module(synth_mod, OUT_DIR=str(tmp_path / "runs"))
    body = json.loads(synth_mod.handler(make_event({}), None)["body"])
    assert body["path"] == os.path.join(str(tmp_path / "runs"), body["config_hash"], "mbc.txt")
    assert os.path.exists(body["path"])


def test_synth_mbc_unstable_design_fails(patch_module, tmp_path):
    patch_module(synth_mod, OUT_DIR=str(tmp_path / "runs"), build_mbc=MagicMock(side_effect=UnstableClosedLoopError(1.02)))
    resp = synth_mod.handler(make_event({}), None)
    assert resp["statusCode"] == 1
    assert "1.020000" in json.loads(resp["body"])["error"]
