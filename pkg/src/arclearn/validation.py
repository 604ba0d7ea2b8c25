"""Input validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np

__all__ = ["check_curve_batch", "check_pair_batch", "check_targets"]


def check_curve_batch(X, n_points: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a float64 (batch, 2, n_points) array of finite curves."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != 2 or arr.shape[2] < 2:
        raise ValueError(
            f"{name} must have shape (n_samples, 2, n_points), got {np.shape(X)}"
        )
    if n_points is not None and arr.shape[2] != n_points:
        raise ValueError(f"{name} has {arr.shape[2]} points per curve, expected {n_points}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def check_pair_batch(X, name: str = "X") -> np.ndarray:
    """Coerce to (n_samples, 2, 2, n_points): two curves per example."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[1] != 2 or arr.shape[2] != 2 or arr.shape[3] < 2:
        raise ValueError(
            f"{name} must have shape (n_samples, 2, 2, n_points): two curves of"
            f" two coordinate rows each, got {np.shape(X)}"
        )
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def check_targets(y, n_samples: int, name: str = "y") -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n_samples:
        raise ValueError(f"{name} has {arr.shape[0]} entries, expected {n_samples}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr
