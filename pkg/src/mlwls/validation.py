"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_points(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Validate an array of points in the closed unit cube.

    One-dimensional input is read as a column of scalar points.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    X = check_array(X, dtype=float, ensure_2d=True, input_name=name)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {dim}")
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValueError(f"{name} must lie in the unit cube [0, 1]^d")
    return X


def check_values(y, n: int, name: str = "y") -> np.ndarray:
    y = check_array(np.asarray(y, dtype=float), ensure_2d=False, input_name=name)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"{name} must be a vector of length {n}, got shape {y.shape}")
    return y


def check_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = check_values(w, n, name="sample_weight")
    if np.any(w <= 0):
        raise ValueError("sample weights must be positive")
    return w
