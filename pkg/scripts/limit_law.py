"""Compare replicated U^n_T against the limit equation solved on the same observation paths.

Prints mean and variance of both samples with standard errors, and the
sawtooth-martingale moment table.

    python scripts/limit_law.py [config.json] [--set key=value ...]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from filterlab.cli import main
from filterlab.config import load_config
from filterlab.io import read_csv
from filterlab.stats import mean_se, variance_se

HERE = Path(__file__).parent


def summarize(out: Path):
    rows = read_csv(out / "galerkin.csv")
    for phi in sorted({r["phi_id"] for r in rows}):
        sel = [r for r in rows if r["phi_id"] == phi]
        for col in ("U_n", "U_value", "U_prelimit"):
            x = np.array([float(r[col]) for r in sel])
            m, ms = mean_se(x)
            v, vs = variance_se(x)
            print(f"{phi:<6} {col:<11} mean {m:+.4f} ± {ms:.4f}   var {v:.4f} ± {vs:.4f}")
    for r in read_csv(out / "r_limit.csv"):
        print(f"n={r['n']:>3}  var {float(r['var']):.4f}  corr(Y,R) {float(r['corr_y']):+.4f}  corr(R1,R2) {float(r['corr_rr']):+.4f}")


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?", default=str(HERE / "configs" / "limit_bounded.json"))
    p.add_argument("--set", dest="overrides", action="append", default=[])
    args = p.parse_args(argv)
    code = main(["error-expansion", "--config", args.config, *[f"--set={o}" for o in args.overrides]])
    if code == 0:
        summarize(Path(load_config(args.config, args.overrides).out))
    return code


if __name__ == "__main__":
    sys.exit(run())
