"""Run artifacts: field CSVs with JSON headers, JSONL traces, JSON reports.

JSON is written with sorted keys and ``repr`` floats so identical inputs give
byte-identical files.  Non-finite floats become ``null``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import Field, Weight, build_grid

__all__ = [
    "to_jsonable",
    "write_json",
    "read_json",
    "write_jsonl",
    "read_jsonl",
    "write_field_csv",
    "read_field_csv",
    "write_table_csv",
]


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _dumps(obj, indent=2) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=indent, allow_nan=False)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(obj) + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_jsonl(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_dumps(rec, indent=None) + "\n")
    return path


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _header_path(path: Path) -> Path:
    return path.with_suffix(".json")


def write_field_csv(path, obj) -> Path:
    """Row-major values; the first axis indexes rows.

    A sidecar ``<name>.json`` records ``dim``, ``nodes_per_axis`` and ``kind``.
    """
    if not isinstance(obj, (Field, Weight)):
        raise ConfigError("only Field or Weight values can be written")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vals = np.asarray(obj.values)
    mat = vals.reshape(vals.shape[0], -1) if vals.ndim > 1 else vals.reshape(1, -1)
    np.savetxt(path, mat, delimiter=",", fmt="%.17g")
    kind = "field" if isinstance(obj, Field) else "weight"
    write_json(_header_path(path), {
        "dim": obj.grid.dim,
        "nodes_per_axis": obj.grid.nodes_per_axis,
        "kind": kind,
    })
    return path


def read_field_csv(path):
    path = Path(path)
    header = read_json(_header_path(path))
    grid = build_grid(header["dim"], header["nodes_per_axis"])
    kind = header.get("kind", "field")
    shape = grid.shape if kind == "field" else grid.cell_shape
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.size != int(np.prod(shape)):
        raise ConfigError(f"{path}: {data.size} values, expected {int(np.prod(shape))}")
    vals = data.reshape(shape)
    return Field(grid, vals) if kind == "field" else Weight(grid, vals)


def write_table_csv(path, columns: dict) -> Path:
    """Columns of equal length; ``None`` and non-finite values are left empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0

    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return repr(float(v)) if math.isfinite(v) else ""
        return str(v)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(fmt(columns[c][i]) for c in names) + "\n")
    return path
