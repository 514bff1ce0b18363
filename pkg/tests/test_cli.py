import json
import subprocess
import sys

import pytest

from filterlab.cli import REPORT_HEADER, main, slope_table
from filterlab.io import read_csv, write_csv

SMALL = ["--set", "N=800", "--set", "grid.M=64", "--set", "grid.n_set=[4,8]", "--set", "checkpoints=[1.0]"]


def test_trivial_suite_exit_zero(tmp_path, capsys):
    assert main(["acceptance", "--suite", "trivial", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "trivial.csv")
    assert rows and all(r["passed"] == "1" for r in rows)
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "timings.json").exists()


def test_malformed_grid_exits_two(tmp_path, capsys):
    code = main(["filter-gwn", "--out", str(tmp_path), "--set", "grid.M=-3"])
    assert code == 2
    assert "grid.M" in capsys.readouterr().err


def test_budget_exit_three(tmp_path, capsys):
    assert main(["filter-gwn", "--out", str(tmp_path), *SMALL, "--set", "budget.particle_steps=10"]) == 3


def test_manifests_identical_across_runs(tmp_path, capsys):
    texts = []
    for _ in range(2):
        assert main(["filter-gwn", "--seed", "4", "--out", str(tmp_path / "same"), *SMALL]) == 0
        texts.append((tmp_path / "same" / "manifest.json").read_text())
    assert texts[0] == texts[1]
    man = json.loads(texts[0])
    assert man["seed"] == 4 and set(man["outputs"]) == {"estimates.csv", "residuals.csv"}


def test_seed_changes_outputs(tmp_path, capsys):
    digests = []
    for s in (1, 2):
        main(["filter-gwn", "--seed", str(s), "--out", str(tmp_path / str(s)), *SMALL])
        digests.append(json.loads((tmp_path / str(s) / "manifest.json").read_text())["outputs"])
    assert digests[0] != digests[1]


def _conv(path, ns, errs):
    rows = [("x", n, 1.0, e, 0.0, 0.0) for n, e in zip(ns, errs)]
    return write_csv(path, ["phi_id", "n", "checkpoint", "abs_error", "se", "slope_fit"], rows)


def test_report_exact_first_order(tmp_path, capsys):
    src = _conv(tmp_path / "c.csv", [4, 8, 16, 32], [0.5 / n for n in (4, 8, 16, 32)])
    assert main(["report", str(src), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "-1.000" in out and "0.000" in out
    (row,) = read_csv(tmp_path / "report.csv")
    assert list(row) == REPORT_HEADER
    assert float(row["slope"]) == pytest.approx(-1.0, abs=1e-12) and row["status"] == "ok"


def test_report_single_n_is_undefined(tmp_path, capsys):
    src = _conv(tmp_path / "c.csv", [8], [0.1])
    assert main(["report", str(src)]) == 0
    assert "undefined" in capsys.readouterr().out
    (row,) = slope_table({"c": read_csv(src)})
    assert row[-1] == "undefined"


def test_report_without_input_exits_two(tmp_path, capsys):
    assert main(["report"]) == 2
    assert main(["report", str(tmp_path / "missing.csv")]) == 2
    empty = write_csv(tmp_path / "e.csv", ["phi_id", "n", "checkpoint", "abs_error"], [])
    assert main(["report", str(empty)]) == 2


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "filterlab.cli", "filter-gwn", "--out", str(tmp_path), "--set", "N=0"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2 and "N" in proc.stderr
