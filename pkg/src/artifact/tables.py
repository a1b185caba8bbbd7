"""CSV emission: comma separated, header row, scientific notation below 1e-3."""

from __future__ import annotations

import csv
import io
import math

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0.0:
            return "0"
        if not math.isfinite(v):
            return repr(v)
        if abs(v) < 1e-3:
            return f"{v:.6e}"
        return f"{v:.10g}"
    return str(v)


def to_csv(rows: list[dict], columns=None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()
