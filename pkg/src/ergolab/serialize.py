"""Deterministic CSV and JSON writers for run artifacts.

Floats are rendered with %.17g so that identical runs produce byte-identical
files; node rows follow the lexicographic grid order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import Grid


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_field_csv(path: Path, grid: Grid, columns: dict[str, np.ndarray]) -> None:
    """One row per node: coordinates, then each named column (vector fields
    expand to one column per component)."""
    header = [f"x{a}" for a in range(grid.dim)]
    arrays = []
    for name, arr in columns.items():
        arr = np.asarray(arr)
        if arr.ndim == 1:
            header.append(name)
            arrays.append(arr[:, None])
        else:
            header.extend(f"{name}{a}" for a in range(arr.shape[1]))
            arrays.append(arr)
    data = np.hstack([grid.coords] + arrays)
    write_csv(path, header, data)


def write_measure_csv(path: Path, measure, threshold: float = 1e-14) -> None:
    grid = measure.grid
    header = [f"x{a}" for a in range(grid.dim)]
    header += [f"xi{a}" for a in range(grid.dim)]
    header += ["weight"]
    coo = measure.weights.tocoo()
    keep = coo.data > threshold
    rows = np.hstack(
        [
            grid.coords[coo.row[keep]],
            measure.xi_atoms[coo.col[keep]],
            coo.data[keep][:, None],
        ]
    )
    order = np.lexsort(rows.T[::-1])
    write_csv(path, header, rows[order])


class _ReportEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        return super().default(o)


def write_json(path: Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, cls=_ReportEncoder)
        fh.write("\n")
