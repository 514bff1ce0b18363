"""Run the acceptance suites and write their CSVs.

    python scripts/run_acceptance.py [--suite trivial|full] [--criteria 1,5] [--out dir]
"""

import sys

from filterlab.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if not any(a.startswith("--suite") for a in args):
        args = ["--suite", "full", *args]
    if not any(a.startswith("--out") for a in args):
        args += ["--out", "results/acceptance"]
    sys.exit(main(["acceptance", *args]))
