"""Command-line driver: ``filterlab <subcommand> [--config f] [--seed s] [--out d] [--threads k] [--set a.b=v]``.

Exit codes: 0 success, 1 failed acceptance assertion, 2 invalid configuration,
3 budget exceeded, 4 numerical blow-up.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from .config import RunManifest, load_config
from .errors import BudgetExceeded, ConfigurationError, SimulationBlowup
from .experiments import RUNNERS
from .io import read_csv, write_csv
from .stats import loglog_slope

COMMANDS = [*RUNNERS, "acceptance", "report"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="filterlab", description="Particle filters, frozen-sensor error and acceptance runs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "report":
            s.add_argument("csv", nargs="*", help="convergence or richardson CSV files")
            s.add_argument("--out", default=None, help="directory for report.csv")
            continue
        s.add_argument("--config", default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None)
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        if name == "acceptance":
            s.add_argument("--suite", choices=["trivial", "full"], default="trivial")
            s.add_argument("--criteria", default=None, help="comma-separated subset of 1..10 (full suite only)")
    return p


def _config(args):
    overrides = list(args.overrides)
    for key in ("seed", "out", "threads"):
        value = getattr(args, key)
        if value is not None:
            overrides.append(f"{key}={value}" if key != "out" else f'out="{value}"')
    return load_config(args.config, overrides)


def _finish(cmd, cfg, files, timings):
    manifest = RunManifest(cmd, cfg.digest(), cfg.seed, config=cfg.to_dict())
    for path in files.values():
        manifest.record(path)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.write(out, timings)


def _run_experiment(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    files = RUNNERS[args.command](cfg)
    _finish(args.command, cfg, files, {args.command: time.perf_counter() - t0})
    for name in sorted(files):
        print(Path(files[name]))
    return 0


def _run_acceptance(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.suite == "trivial":
        from .checks import run_trivial

        results = run_trivial()
        rows = [(r.name, int(r.passed), r.detail) for r in results]
        files = {"trivial.csv": write_csv(out / "trivial.csv", ["check", "passed", "detail"], rows)}
        timings = {r.name: r.seconds for r in results}
        ok = all(r.passed for r in results)
    else:
        from .acceptance import run_full, write_results

        only = None if args.criteria is None else [int(c) for c in args.criteria.split(",")]
        results = run_full(threads=cfg.threads, only=only)
        files = {"acceptance.csv": write_results(results, out / "acceptance.csv")}
        timings = {f"criterion_{r.number}": r.seconds for r in results}
        ok = all(r.passed for r in results)
    _finish(f"acceptance --suite {args.suite}", cfg, files, timings)
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


# --- report --------------------------------------------------------------------------


def slope_table(tables):
    """Per ``(source, phi_id, checkpoint)`` log-log slope with a 95% interval.

    ``tables`` maps a source name to rows with keys ``phi_id, n, checkpoint, abs_error``.
    """
    out = []
    for source, rows in tables.items():
        groups = defaultdict(list)
        for r in rows:
            groups[(r["phi_id"], float(r["checkpoint"]))].append((float(r["n"]), float(r["abs_error"])))
        for (phi, t), pts in sorted(groups.items()):
            pts = sorted(pts)
            n = np.array([p[0] for p in pts])
            e = np.array([p[1] for p in pts])
            ok = e > 0
            if len(np.unique(n[ok])) < 2:
                out.append((source, phi, t, int(ok.sum()), math.nan, math.nan, math.nan, math.nan, "undefined"))
                continue
            slope, se = loglog_slope(n[ok], e[ok])
            df = int(ok.sum()) - 2
            half = sstats.t.ppf(0.975, df) * se if df > 0 else math.inf
            out.append((source, phi, t, int(ok.sum()), slope, se, slope - half, slope + half, "ok"))
    return out


REPORT_HEADER = ["source", "phi_id", "checkpoint", "points", "slope", "slope_se", "ci_low", "ci_high", "status"]


def _fmt(v):
    return "undefined" if isinstance(v, float) and math.isnan(v) else f"{v:.3f}"


def _run_report(args) -> int:
    if not args.csv:
        raise ConfigurationError("no CSV files given", "csv")
    tables = {}
    for path in args.csv:
        try:
            rows = read_csv(path)
        except OSError as exc:
            raise ConfigurationError(str(exc), "csv") from None
        if not rows:
            raise ConfigurationError(f"{path} has no rows", "csv")
        missing = {"phi_id", "n", "checkpoint", "abs_error"} - set(rows[0])
        if missing:
            raise ConfigurationError(f"{path} lacks columns {sorted(missing)}", "csv")
        tables[Path(path).name] = rows
    table = slope_table(tables)
    print(f"{'source':<20} {'phi':<8} {'t':>6} {'slope':>10} {'se':>8}   95% interval")
    for src, phi, t, _, slope, se, lo, hi, status in table:
        ci = "undefined" if status == "undefined" else f"[{lo:.3f}, {hi:.3f}]"
        print(f"{src:<20} {phi:<8} {t:>6.3f} {_fmt(slope):>10} {_fmt(se):>8}   {ci}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_csv(Path(args.out) / "report.csv", REPORT_HEADER, table)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            return _run_report(args)
        if args.command == "acceptance":
            return _run_acceptance(args)
        return _run_experiment(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except SimulationBlowup as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
