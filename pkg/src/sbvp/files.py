"""CSV/TSV/JSON exports.  Floats are written with 17 significant digits so
that reading a file back reproduces the values bit for bit."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import IoError

SOLUTION_COLUMNS = ("x1", "x2", "u", "du1", "du2", "h11", "h12", "h22")
DUAL_COLUMNS = ("y1", "y2", "x1", "x2", "utilde", "dual_resid")
RADIAL_COLUMNS = ("r", "uprime", "u")


def _fmt(x) -> str:
    return "%.17g" % x


def write_table(path, columns, data) -> Path:
    path = Path(path)
    data = np.asarray(data, dtype=float)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(",".join(columns) + "\n")
            for row in data:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_table(path, columns) -> np.ndarray:
    """Rows of a CSV with exactly the header ``columns``; IoError on any malformation."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(c.strip() for c in rows[0]) != tuple(columns):
        raise IoError(f"{path}: expected header {','.join(columns)}")
    body = rows[1:]
    out = np.empty((len(body), len(columns)))
    for k, row in enumerate(body, start=2):
        if len(row) != len(columns):
            raise IoError(f"{path}:{k}: expected {len(columns)} fields, found {len(row)}")
        try:
            out[k - 2] = [float(x) for x in row]
        except ValueError as exc:
            raise IoError(f"{path}:{k}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise IoError(f"{path}: non-finite values")
    return out


def write_solution(path, grid, u) -> Path:
    u = np.asarray(u, dtype=float)
    grad = grid.gradient_of(u)
    hess = grid.hessian_of(u)
    data = np.column_stack([grid.nodes, u, grad, hess[:, 0, 0], hess[:, 0, 1], hess[:, 1, 1]])
    return write_table(path, SOLUTION_COLUMNS, data)


def read_solution(path, grid, xtol: float = 1e-12) -> np.ndarray:
    """Nodal u from a solution CSV, checked against the node coordinates of ``grid``."""
    data = read_table(path, SOLUTION_COLUMNS)
    if len(data) != grid.size:
        raise IoError(f"{path}: {len(data)} rows, the grid has {grid.size} nodes")
    if np.max(np.abs(data[:, :2] - grid.nodes)) > xtol:
        raise IoError(f"{path}: node coordinates do not match the configured grid")
    return data[:, 2].copy()


def write_dual(path, samples, dual_resid) -> Path:
    data = np.column_stack([samples.y, samples.x, samples.utilde_val, dual_resid])
    return write_table(path, DUAL_COLUMNS, data)


def write_radial(path, r, uprime, u) -> Path:
    return write_table(path, RADIAL_COLUMNS, np.column_stack([r, uprime, u]))


def write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def write_log(path, trace) -> Path:
    return write_text(path, "\n".join(trace.log_lines()) + "\n")


def write_rows(path, columns, rows) -> Path:
    """Mixed-type rows (sweep output); floats at 17 digits, everything else via str."""
    def cell(v):
        if isinstance(v, bool) or v is None:
            return "" if v is None else str(v).lower()
        if isinstance(v, (float, np.floating)):
            return _fmt(v)
        return str(v)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([cell(row.get(c)) for c in columns])
    return write_text(path, buf.getvalue())
