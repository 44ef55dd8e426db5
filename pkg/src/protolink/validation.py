"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

UNIT_NORM_TOL = 1e-6


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def as_vector(values, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, optionally checking its dimension."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dim {arr.shape[0]}, expected {dim}")
    return arr


def normalized(values, name: str = "vector") -> np.ndarray:
    """L2-normalize a vector, rejecting zero norm (undefined cosine)."""
    arr = as_vector(values, name=name)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError(f"{name} has zero norm")
    return arr / norm


def check_unit_rows(matrix: np.ndarray, tol: float = UNIT_NORM_TOL, name: str = "matrix") -> None:
    norms = np.linalg.norm(np.asarray(matrix, dtype=np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if bad.size:
        raise ValueError(f"{name} row {bad[0]} has norm {norms[bad[0]]:.8f}, expected 1 within {tol}")
