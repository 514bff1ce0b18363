"""Fast checks of the acceptance machinery on reduced sizes (not the gating battery)."""

import numpy as np

from filterlab.acceptance import (
    CriterionResult,
    cluster_instances,
    convergence_sweep,
    first_order,
    richardson_order,
    u_bounded,
    write_results,
)
from filterlab.io import read_csv


def test_reduced_sweep_feeds_all_three_criteria(tmp_path):
    sweep = convergence_sweep(replicates=3, N=3000, M=256)
    res = [first_order(sweep), u_bounded(sweep), richardson_order(sweep)]
    assert [r.number for r in res] == [6, 7, 9]
    assert all(len(r.metrics) == 3 and r.seconds >= 0 for r in res)
    rows = read_csv(write_results(res, tmp_path / "a.csv"))
    assert len(rows) == 9 and set(rows[0]) == {"criterion", "title", "metric", "value", "threshold", "passed"}


def test_fine_step_shift_is_gated():
    sweep = convergence_sweep(replicates=2, N=1000, M=256)
    good = first_order(sweep, {"x": (1.0, 0.1, 1.1, 0.1)})
    bad = first_order(sweep, {"x": (1.0, 0.01, 2.0, 0.01)})
    assert any("halved" in m[0] and m[3] for m in good.metrics)
    assert not bad.passed


def test_cluster_instances_are_small_and_reproducible():
    a = cluster_instances(6)
    b = cluster_instances(6)
    assert len(a) == 6
    for (ma, pa), (mb, pb) in zip(a, b):
        assert len(pa) <= 10 and np.array_equal(pa.times, pb.times)


def test_result_line_format():
    line = CriterionResult(3, "residuals", True, "fine", seconds=2.4).line()
    assert line == "criterion  3 [PASS] residuals: fine (2s)"
