from cul import selfcheck


def test_every_check_passes():
    results = selfcheck.run_all()
    assert [r["check"] for r in results] == [
        "dead_zone", "dare_residual", "gradients", "mbc_servo", "residual_identity", "ewc_algebra",
    ]
    failed = [r for r in results if not r["passed"]]
    assert failed == []


def test_raising_check_is_reported_as_failed(monkeypatch):
    def check_broken():
        raise RuntimeError("boom")

    monkeypatch.setattr(selfcheck, "CHECKS", (selfcheck.check_dead_zone, check_broken))
    results = selfcheck.run_all()
    assert results[0]["passed"] is True
    assert results[1] == {"check": "broken", "passed": False, "detail": "raised RuntimeError: boom"}
