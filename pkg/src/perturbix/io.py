"""Plain-text and binary file formats.

* sparse matrices: one ``i j value`` triplet per line, ``#`` comments
* vectors and tables: CSV with 17 significant digits
* trajectories: raw little-endian float64 records plus a JSON header
  ``{"dims", "dt", "count"}`` stored next to them as ``<name>.json``;
  small trajectories may also be CSV (one row per sample)
"""
from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
import scipy.sparse

from .errors import DomainError

FLOAT_FMT = "%.17g"


def save_triplets(path, mat, header: str | None = None) -> None:
    coo = scipy.sparse.coo_array(np.asarray(mat) if not scipy.sparse.issparse(mat) else mat)
    n = coo.shape[0]
    with open(path, "w") as fh:
        fh.write(f"# n {n}\n")
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        order = np.lexsort((coo.row, coo.col))
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {FLOAT_FMT % v}\n")


def load_triplets(path, n: int | None = None) -> np.ndarray:
    """Read a triplet file into a dense array; ``n`` falls back to the ``# n`` comment."""
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if n is None and len(parts) == 2 and parts[0] == "n":
                    n = int(parts[1])
                continue
            i, j, v = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    if n is None:
        n = max(max(rows, default=-1), max(cols, default=-1)) + 1
    out = np.zeros((n, n))
    out[np.array(rows, dtype=int), np.array(cols, dtype=int)] = vals
    return out


def save_table(path, columns: dict) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt=FLOAT_FMT)


def load_table(path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {k: np.atleast_1d(data[k]) for k in data.dtype.names}


def save_vector(path, v, name: str = "value") -> None:
    save_table(path, {name: v})


def load_vector(path) -> np.ndarray:
    return next(iter(load_table(path).values()))


def save_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_trajectory(path, points, dt: float, fmt: str = "binary") -> None:
    path = Path(path)
    pts = np.asarray(points, dtype="<f8")
    if pts.ndim == 1:
        pts = pts[:, None]
    if fmt == "csv":
        np.savetxt(path, pts, delimiter=",", fmt=FLOAT_FMT)
    else:
        pts.tofile(path)
    save_json(_header_path(path), {"dims": int(pts.shape[1]), "dt": float(dt), "count": int(pts.shape[0])})


def load_trajectory(path, dt: float | None = None):
    """Return ``(points, dt)``; CSV files are recognised by suffix."""
    path = Path(path)
    hdr_path = _header_path(path)
    hdr = load_json(hdr_path) if hdr_path.exists() else None
    if path.suffix.lower() == ".csv":
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", "loadtxt: input contained no data")
            pts = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        if hdr is None:
            raise DomainError(f"binary trajectory {path} has no header {hdr_path}")
        pts = np.fromfile(path, dtype="<f8")
        if pts.size != hdr["count"] * hdr["dims"]:
            raise DomainError("trajectory size does not match its header")
        pts = pts.reshape(hdr["count"], hdr["dims"])
    if dt is None:
        if hdr is None:
            raise DomainError("dt not given and no header found")
        dt = hdr["dt"]
    return pts, float(dt)
