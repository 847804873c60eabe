import json
from unittest.mock import MagicMock

import cli
from cul import selfcheck


def test_flags_become_event_payload():
    args = cli.build_parser().parse_args(["train", "--seed", "4", "--variant", "all", "--horizon", "30"])
    assert cli.to_event(args) == {"body": {"seed": 4, "variant": "all", "horizon": 30}}


def test_flags_are_scoped_per_command():
    assert cli.main(["eval", "--trials", "3"]) == 2
    assert cli.main(["nonsense"]) == 2


def test_main_returns_handler_status_and_prints_body(monkeypatch, capsys):
    monkeypatch.setattr(selfcheck, "run_all", MagicMock(return_value=[{"check": "x", "passed": True, "detail": ""}]))
    assert cli.main(["selfcheck"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] is True


def test_usage_error_exit_code(tmp_path):
    assert cli.main(["train", "--variant", "bogus", "--out", str(tmp_path)]) == 2


def test_synth_mbc_through_cli(tmp_path, capsys):
    target = tmp_path / "mbc.txt"
    assert cli.main(["synth-mbc", "--out", str(tmp_path), "--output", str(target)]) == 0
    assert target.exists()
    assert json.loads(capsys.readouterr().out)["order"] == 7
