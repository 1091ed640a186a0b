"""Parsers for the simulation pipeline's delimited output files.

The boundary between the simulation package and this one is the file
schema: delimited text with unit-suffixed column names and #-prefixed
key=value metadata. Nothing here imports the simulation code.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    pass


def read_table(path, required: tuple[str, ...]) -> tuple[dict, dict]:
    """Delimited text -> ({column: array}, {meta_key: value}).

    Raises SchemaError naming the file and the missing column when the
    header does not carry every required column.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file missing: {path}")
    meta: dict = {}
    names = None
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                key, eq, value = token.partition("=")
                if eq:
                    meta[key] = value
            continue
        parts = line.split(",")
        if names is None:
            names = parts
            continue
        rows.append(parts)
    if names is None:
        raise SchemaError(f"{path}: no header row found")
    for need in required:
        if need not in names:
            raise SchemaError(f"{path}: required column {need!r} missing "
                              f"(found {names})")
    columns: dict = {}
    for i, name in enumerate(names):
        values = [r[i] for r in rows]
        try:
            columns[name] = np.array([float(v) for v in values])
        except ValueError:
            columns[name] = np.array(values)
    return columns, meta


def read_kv_report(path) -> dict:
    """key=value report (sections ignored) -> dict of strings."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file missing: {path}")
    out = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith(("#", "[")):
            continue
        key, eq, value = line.partition("=")
        if eq:
            out[key.strip()] = value.strip()
    return out


def histogram_grid(path) -> tuple[np.ndarray, float, float]:
    """histogram2d.csv -> (dense counts array, bin_width_ps, period_ps)."""
    cols, meta = read_table(path, ("ts_bin_ps", "ti_bin_ps", "counts"))
    if "bin_width_ps" not in meta or "period_ps" not in meta:
        raise SchemaError(f"{path}: bin_width_ps/period_ps metadata missing")
    bin_w = float(meta["bin_width_ps"])
    period = float(meta["period_ps"])
    n = int(np.ceil(period / bin_w))
    counts = np.zeros((n, n))
    if cols["ts_bin_ps"].size:
        i = (cols["ts_bin_ps"] / bin_w).astype(int)
        j = (cols["ti_bin_ps"] / bin_w).astype(int)
        counts[i, j] = cols["counts"]
    return counts, bin_w, period
