"""Input checks shared by the estimator front-ends."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .geometry import CameraIntrinsics


def check_points(X, *, name: str = "X") -> np.ndarray:
    """Finite (N, 2) float array of principal-point-relative pixel offsets."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, input_name=name)
    if X.shape[1] != 2:
        raise ValueError(f"{name} must have 2 columns (x, y), got {X.shape[1]}")
    return X


def check_flows(y, n_samples: int) -> np.ndarray:
    y = check_array(y, dtype=np.float64, ensure_min_samples=1, input_name="y")
    if y.shape != (n_samples, 2):
        raise ValueError(f"y must have shape ({n_samples}, 2), got {y.shape}")
    return y


def check_vector3(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be 3 finite numbers, got {v!r}")
    return v


def check_positive(x, name: str) -> float:
    x = float(x)
    if not x > 0 or not np.isfinite(x):
        raise ValueError(f"{name} must be positive and finite, got {x}")
    return x


def check_intrinsics(K) -> CameraIntrinsics:
    if not isinstance(K, CameraIntrinsics):
        raise TypeError(f"K must be CameraIntrinsics, got {type(K).__name__}")
    return K
