"""Long-format CSV output with a fixed float format."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    """UTF-8, header row, ``.`` decimal separator, ``\\n`` line ends."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def path_rows(times, values):
    """Rows ``(t, v_1, ..., v_d)`` for a path ``(M+1, d)``."""
    values = np.asarray(values, dtype=float).reshape(len(times), -1)
    return ([t, *v] for t, v in zip(times, values))
