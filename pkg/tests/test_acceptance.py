"""Exit-criteria battery at full size.

Runs every criterion once (shared sweep for the convergence criteria), prints one
PASS/FAIL line per criterion and asserts each separately.  Takes over an hour on
one core; select or skip with ``-m acceptance`` / ``-m "not acceptance"``.
Also runnable directly: ``python tests/test_acceptance.py``.
"""

import pytest

from filterlab.acceptance import run_full, write_results

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.fixture(scope="module")
def battery(tmp_path_factory):
    results = run_full(log=lambda line: None)
    write_results(results, tmp_path_factory.mktemp("acceptance") / "acceptance.csv")
    return {r.number: r for r in results}


def _check(battery, capsys, number):
    r = battery[number]
    with capsys.disabled():
        print("\n" + r.line())
        for name, value, threshold, ok in r.metrics:
            print(f"    {'ok  ' if ok else 'MISS'} {name}: {value:.6g} (threshold {threshold})")
    assert r.passed, r.summary


def test_weights_have_unit_mean(battery, capsys):
    _check(battery, capsys, 1)


def test_filter_agrees_with_kalman(battery, capsys):
    _check(battery, capsys, 2)


def test_zakai_and_ks_residuals_vanish(battery, capsys):
    _check(battery, capsys, 3)


def test_cluster_routes_agree(battery, capsys):
    _check(battery, capsys, 4)


def test_sawtooth_martingale_identities(battery, capsys):
    _check(battery, capsys, 5)


def test_frozen_sensor_error_is_first_order(battery, capsys):
    _check(battery, capsys, 6)


def test_scaled_error_stays_bounded(battery, capsys):
    _check(battery, capsys, 7)


def test_scaled_error_matches_limit_moments(battery, capsys):
    _check(battery, capsys, 8)


def test_extrapolation_raises_the_order(battery, capsys):
    _check(battery, capsys, 9)


def test_outputs_are_deterministic(battery, capsys):
    _check(battery, capsys, 10)


if __name__ == "__main__":
    import sys

    res = run_full()
    sys.exit(0 if all(r.passed for r in res) else 1)
