"""Input checks shared by the metrics and the estimator wrappers."""

from __future__ import annotations

import numpy as np


def check_array_1d(x, name: str = "x", dtype=float) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str = "x") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_consistent_length(*arrays, min_length: int = 0) -> int:
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inputs have inconsistent lengths {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    if n < min_length:
        raise ValueError(f"need at least {min_length} samples, got {n}")
    return n
