"""Frozen-sensor error sweep: convergence and extrapolation tables plus a slope report.

    python scripts/sweep.py [config.json] [--threads k] [--set key=value ...]
"""

import argparse
import sys
from pathlib import Path

from filterlab.cli import main

HERE = Path(__file__).parent


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?", default=str(HERE / "configs" / "sweep_bounded.json"))
    p.add_argument("--threads", default="1")
    p.add_argument("--set", dest="overrides", action="append", default=[])
    args = p.parse_args(argv)
    extra = ["--threads", args.threads, *[f"--set={o}" for o in args.overrides]]
    tables = []
    for cmd in ("convergence", "richardson"):
        code = main([cmd, "--config", args.config, *extra])
        if code:
            return code
    from filterlab.config import load_config

    out = Path(load_config(args.config, args.overrides).out)
    tables = [str(out / "convergence.csv"), str(out / "richardson.csv")]
    return main(["report", *tables, "--out", str(out)])


if __name__ == "__main__":
    sys.exit(run())
