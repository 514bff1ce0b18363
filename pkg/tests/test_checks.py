import pytest

from filterlab.checks import CHECKS, run_trivial


@pytest.mark.parametrize("check", CHECKS, ids=[c.__name__ for c in CHECKS])
def test_each_trivial_case(check):
    ok, detail = check()
    assert ok, detail


def test_runner_reports_every_check():
    lines = []
    results = run_trivial(log=lines.append)
    assert [r.name for r in results] == [c.__name__ for c in CHECKS]
    assert all(r.passed for r in results)
    assert len(lines) >= len(CHECKS)
