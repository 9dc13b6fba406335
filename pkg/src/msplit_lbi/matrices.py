"""Dense matrix helpers shared by every module.

All matrices are plain 2-D ``float64`` numpy arrays.  The helpers here
validate shapes and finiteness on entry and define the two on-disk formats
used by the CLI: headerless numeric CSV (one row per matrix row) and JSON
objects ``{"rows": r, "cols": c, "data": [...]}`` with row-major data.
"""

from __future__ import annotations

import csv
import json

import numpy as np


class MatrixError(ValueError):
    """Invalid matrix content or incompatible shapes."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a validated 2-D float array.

    1-D input is treated as a single column.  Empty or non-finite input is
    rejected.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise MatrixError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise MatrixError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MatrixError(f"{name} contains NaN or infinite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise MatrixError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def frobenius_norm(a) -> float:
    a = as_matrix(a, "a")
    return float(np.sqrt(np.sum(a * a)))


def spectral_norm(a, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest singular value of ``a`` by power iteration on the Gram matrix.

    Iterates on the smaller of ``a^T a`` / ``a a^T`` until the eigenvalue
    estimate is stable to relative tolerance ``tol``.
    """
    a = as_matrix(a, "a")
    m = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    n = m.shape[0]
    # Deterministic start with all spectral components present.
    v = 1.0 + np.arange(n) / max(n - 1, 1)
    v /= np.linalg.norm(v)
    lam_prev = -1.0
    for _ in range(max_iter):
        w = m @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        if abs(lam - lam_prev) <= tol * max(lam, 1.0):
            return float(np.sqrt(lam))
        lam_prev = lam
    raise MatrixError("power iteration did not converge; input may be degenerate")


def load_matrix_csv(path) -> np.ndarray:
    """Read a headerless numeric CSV matrix.  Ragged rows are rejected."""
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record:
                continue
            try:
                rows.append([float(x) for x in record])
            except ValueError as exc:
                raise MatrixError(f"{path}: non-numeric value on line {lineno}") from exc
            if len(rows[-1]) != len(rows[0]):
                raise MatrixError(
                    f"{path}: ragged row on line {lineno} "
                    f"({len(rows[-1])} fields, expected {len(rows[0])})"
                )
    if not rows:
        raise MatrixError(f"{path}: empty matrix file")
    return as_matrix(np.array(rows), name=str(path))


def save_matrix_csv(path, a) -> None:
    a = as_matrix(a)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in a:
            writer.writerow([format_float(x) for x in row])


def load_matrix_json(path) -> np.ndarray:
    with open(path) as fh:
        obj = json.load(fh)
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise MatrixError(f"{path}: expected keys rows/cols/data") from exc
    if rows <= 0 or cols <= 0:
        raise MatrixError(f"{path}: rows and cols must be positive")
    if len(data) != rows * cols:
        raise MatrixError(f"{path}: data length {len(data)} != rows*cols {rows * cols}")
    return as_matrix(np.array(data, dtype=float).reshape(rows, cols), name=str(path))


def save_matrix_json(path, a) -> None:
    a = as_matrix(a)
    obj = {"rows": a.shape[0], "cols": a.shape[1], "data": [float(x) for x in a.ravel()]}
    with open(path, "w") as fh:
        json.dump(obj, fh)


def format_float(x: float) -> str:
    """Shortest round-trip decimal form; keeps CSV output byte-reproducible."""
    return repr(float(x))
