"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .weights import Weight, isotropic, make_quadratic


def check_points(X, n: int, name: str = "X") -> np.ndarray:
    """2-D float array of points in R^{n+1}; a single point is promoted."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    arr = check_array(arr, dtype=np.float64, ensure_2d=True, input_name=name)
    if arr.shape[1] != n + 1:
        raise ValueError(f"{name} must have {n + 1} columns, got {arr.shape[1]}")
    return arr


def check_weight(weight, n: int) -> Weight:
    if weight is None:
        return isotropic(n)
    if isinstance(weight, Weight):
        if weight.n != n:
            raise ValueError(f"weight lives on R^{weight.n + 1}, model on R^{n + 1}")
        return weight
    Q = np.asarray(weight, dtype=np.float64)
    if Q.shape != (n + 1, n + 1):
        raise ValueError(f"weight matrix must be {(n + 1, n + 1)}")
    return make_quadratic(Q)


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
