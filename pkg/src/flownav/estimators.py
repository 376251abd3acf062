"""Scikit-learn style front-end for motion-field inversion.

``X`` holds principal-point-relative feature positions (N, 2) in pixels and
``y`` the measured flow (N, 2) in px/s.  Angular rates and the rangefinder
reading are per-fit side information and go to :meth:`fit` as keywords.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_flows, check_intrinsics, check_points, check_positive, check_vector3
from .depth import PlanarFixedModel, PlanarSlopeModel, SphericalModel
from .geometry import MOON_RADIUS, CameraIntrinsics, pixel_to_normalized
from .motion import EgomotionEstimate, invert_linear, invert_slope, predict_flow

MODELS = ("planar", "slope", "sphere")


class MotionFieldRegressor(RegressorMixin, BaseEstimator):
    """Recover camera-frame translational velocity from sparse flow.

    Parameters
    ----------
    K : CameraIntrinsics
        Pinhole intrinsics of the camera that produced the flow.
    model : {"planar", "slope", "sphere"}
        Depth model.  ``planar`` and ``sphere`` need the surface normal at the
        boresight in :meth:`fit`; ``slope`` estimates it.
    radius : float
        Sphere radius for ``model="sphere"``.
    condition_threshold : float
        Condition number above which ``estimate_.condition_ok`` is False.
    max_iter : int
        Iteration cap of the slope solver.
    """

    def __init__(self, K: Optional[CameraIntrinsics] = None, model: str = "planar",
                 radius: float = MOON_RADIUS, condition_threshold: float = 1e8,
                 max_iter: int = 200):
        self.K = K
        self.model = model
        self.radius = radius
        self.condition_threshold = condition_threshold
        self.max_iter = max_iter

    def _check_params(self) -> CameraIntrinsics:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        check_positive(self.radius, "radius")
        check_positive(self.condition_threshold, "condition_threshold")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        return check_intrinsics(self.K)

    def fit(self, X, y, *, rates: Sequence[float] = (0.0, 0.0, 0.0), rho: float,
            normal: Optional[Sequence[float]] = None,
            init: Optional[Sequence[float]] = None) -> "MotionFieldRegressor":
        """Invert the motion field.

        ``normal`` is the unit surface normal at the boresight (camera frame,
        gamma > 0 for a surface in front of the camera) and defaults to nadir.
        ``init`` warm-starts the slope model as ``(vx, vy, vz, alpha, beta)``.
        """
        K = self._check_params()
        X = check_points(X)
        y = check_flows(y, len(X))
        w = check_vector3(rates, "rates")
        rho = check_positive(rho, "rho")
        n = check_vector3((0.0, 0.0, 1.0) if normal is None else normal, "normal")
        obs = (X, y)
        if self.model == "slope":
            est = invert_slope(obs, w, rho, K, init=init, max_iter=int(self.max_iter),
                               condition_threshold=self.condition_threshold)
            depth = PlanarSlopeModel(est.slope[0], est.slope[1], rho)
        else:
            if self.model == "planar":
                depth = PlanarFixedModel(n, rho)
            else:
                depth = SphericalModel(n, rho, self.radius)
            est = invert_linear(obs, w, depth, K, condition_threshold=self.condition_threshold)
        self.estimate_: EgomotionEstimate = est
        self.velocity_ = np.asarray(est.velocity, dtype=float)
        self.slope_ = est.slope
        self.depth_model_ = depth
        self.rates_ = w
        self.n_features_in_ = 2
        return self

    def predict(self, X) -> np.ndarray:
        """Motion field (px/s) at ``X`` under the fitted velocity and depth model."""
        check_is_fitted(self, "velocity_")
        X = check_points(X)
        n = pixel_to_normalized(X, self.K)
        d = self.depth_model_.inverse_depth(n[:, 0], n[:, 1])
        return predict_flow(X, d, self.velocity_, self.rates_, self.K)

    @property
    def residual_rms_(self) -> float:
        check_is_fitted(self, "velocity_")
        return float(self.estimate_.residual_rms)

    def speed(self) -> float:
        check_is_fitted(self, "velocity_")
        return math.sqrt(float(self.velocity_ @ self.velocity_))
