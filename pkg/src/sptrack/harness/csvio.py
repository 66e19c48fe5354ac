"""Delimited output with lossless floats and deterministic row order."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


def _sort_key(keys):
    def key(row):
        out = []
        for k in keys:
            v = row.get(k)
            # numbers before strings before missing; keeps mixed columns comparable
            if v is None:
                out.append((2, 0.0, ""))
            elif isinstance(v, str):
                out.append((1, 0.0, v))
            else:
                out.append((0, float(v), ""))
        return out
    return key


def write_csv(path, columns: Sequence[str], rows: Iterable[Dict],
              sort_by: Optional[Sequence[str]] = None) -> Path:
    """Write ``rows`` (dicts) with a fixed header; sort first when ``sort_by`` is given."""
    rows = list(rows)
    if sort_by:
        rows.sort(key=_sort_key(sort_by))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])
    return path


def _parse(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path) -> List[Dict]:
    with Path(path).open(newline="") as fh:
        return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def column(rows: List[Dict], name: str) -> np.ndarray:
    return np.array([np.nan if r.get(name) is None else r[name] for r in rows], dtype=float)


# -- tile snapshots -------------------------------------------------------------
# One row per element in row-major order: position, weight, device parameters
# and bounds.  dw_min and the model tag repeat on every row so a single file
# rebuilds the tile; the pulse stream is not part of the snapshot.

TILE_COLUMNS = ("row", "col", "weight", "alpha_plus", "alpha_minus", "tau_max", "tau_min",
                "clip_lo", "clip_hi", "dw_min", "model")


def save_tile(path, tile) -> Path:
    from ..devices import ConstantSymmetric
    tag = "constant" if isinstance(tile.model, ConstantSymmetric) else "linear"
    rows = []
    for i in range(tile.rows):
        for j in range(tile.cols):
            rows.append(dict(row=i, col=j, weight=tile.weights[i, j],
                             alpha_plus=tile.alpha_plus[i, j], alpha_minus=tile.alpha_minus[i, j],
                             tau_max=tile.tau_max[i, j], tau_min=tile.tau_min[i, j],
                             clip_lo=tile.clip_lo[i, j], clip_hi=tile.clip_hi[i, j],
                             dw_min=tile.dw_min, model=tag))
    return write_csv(path, TILE_COLUMNS, rows)


def load_tile(path, seed=None):
    from ..devices import AnalogTile, ConstantSymmetric, LinearDevice
    rows = read_csv(path)
    if not rows:
        raise ValueError(f"empty tile snapshot {path}")
    shape = (max(r["row"] for r in rows) + 1, max(r["col"] for r in rows) + 1)
    arr = {c: np.empty(shape) for c in TILE_COLUMNS[2:9]}
    for r in rows:
        for c in arr:
            arr[c][r["row"], r["col"]] = float(r[c])
    first = rows[0]
    if first["model"] == "constant":
        model = ConstantSymmetric(float(first["alpha_plus"]), float(first["clip_hi"]))
    else:
        model = LinearDevice(1.0, 1.0, float(first["tau_max"]), float(first["tau_min"]))
    return AnalogTile(arr["weight"], arr["alpha_plus"], arr["alpha_minus"], arr["tau_max"],
                      arr["tau_min"], float(first["dw_min"]), model, arr["clip_lo"],
                      arr["clip_hi"], rng=np.random.default_rng(seed))
