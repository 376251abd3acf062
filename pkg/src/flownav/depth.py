"""Rangefinder-parameterised inverse-depth models.

Every model maps normalised ray slopes ``(x, y) = (X/Z, Y/Z)`` to the inverse
depth ``d = 1/Z``.  The bulk ``inverse_depth`` methods never raise: rays that
miss the surface (or hit it behind the camera) come back as NaN so callers can
mask them.  The module-level functions are the strict single-purpose entry
points and raise instead.

All surface normals use the planar convention: unit vector in the camera
frame pointing from the camera side toward the surface, gamma = +1 for a
nadir-looking camera over level ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DomainError, NoIntersection, NonPositiveDepth
from .geometry import CameraIntrinsics, UnitNormal, pixel_to_normalized


def _plane_inverse_depth(x, y, alpha, beta, gamma, rho):
    # d = (alpha x + beta y) / H + 1/rho with H = rho * gamma
    h = rho * gamma
    return (alpha / h) * x + (beta / h) * y + 1.0 / rho


def _as_unit(normal) -> UnitNormal:
    k = np.asarray(normal, dtype=float)
    n = np.linalg.norm(k)
    if not np.isfinite(n) or n == 0.0:
        raise DomainError(f"degenerate normal {normal!r}")
    k = k / n
    return UnitNormal(float(k[0]), float(k[1]), float(k[2]))


@dataclass(frozen=True)
class PlanarFixedModel:
    """Plane with a known (attitude-derived) normal through the boresight hit."""

    normal: UnitNormal
    rho: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal", _as_unit(self.normal))
        if not self.rho > 0:
            raise DomainError(f"range must be positive, got {self.rho}")
        if not self.normal.gamma > 0:
            raise DomainError("plane normal must have gamma > 0 (plane in front of the camera)")

    @property
    def altitude(self) -> float:
        return self.rho * self.normal.gamma

    def inverse_depth(self, x, y) -> np.ndarray:
        a, b, g = self.normal
        d = _plane_inverse_depth(np.asarray(x, float), np.asarray(y, float), a, b, g, self.rho)
        return np.where(d > 0, d, np.nan)


@dataclass(frozen=True)
class PlanarSlopeModel:
    """Plane whose in-image slope components are free parameters.

    ``gamma`` is tied to the slopes through the unit-norm constraint.
    """

    alpha: float
    beta: float
    rho: float

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise DomainError(f"range must be positive, got {self.rho}")
        if self.alpha**2 + self.beta**2 >= 1.0:
            raise DomainError(
                f"slope parameters alpha={self.alpha}, beta={self.beta} leave no real gamma"
            )

    @property
    def gamma(self) -> float:
        return math.sqrt(1.0 - self.alpha**2 - self.beta**2)

    @property
    def normal(self) -> UnitNormal:
        return UnitNormal(self.alpha, self.beta, self.gamma)

    def inverse_depth(self, x, y) -> np.ndarray:
        d = _plane_inverse_depth(
            np.asarray(x, float), np.asarray(y, float), self.alpha, self.beta, self.gamma, self.rho
        )
        return np.where(d > 0, d, np.nan)

    def inverse_depth_gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Partial derivatives of ``d`` with respect to alpha and beta."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        g = self.gamma
        s = self.alpha * x + self.beta * y
        rg = self.rho * g
        dd_da = x / rg + self.alpha * s / (rg * g * g)
        dd_db = y / rg + self.beta * s / (rg * g * g)
        return dd_da, dd_db


@dataclass(frozen=True)
class SphericalModel:
    """Sphere of radius R touching the boresight ray at range rho.

    ``normal`` is the inward surface normal at the boresight hit (planar
    convention), so the sphere centre sits at ``(0, 0, rho) + R * normal``.
    """

    normal: UnitNormal
    rho: float
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal", _as_unit(self.normal))
        if not (self.rho > 0 and self.radius > 0):
            raise DomainError(f"range and radius must be positive, got {self.rho}, {self.radius}")

    def quadratic(self, x, y):
        """Coefficients of ``a Z^2 + b Z + c = 0`` for the rays ``(x, y, 1) Z``."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        al, be, ga = self.normal
        r, rho = self.radius, self.rho
        a = x * x + y * y + 1.0
        b = -2.0 * (r * al * x + r * be * y + r * ga + rho)
        # |centre|^2 - R^2 with |normal| = 1; the R^2 terms cancel analytically
        c = np.full_like(a, rho * rho + 2.0 * r * rho * ga)
        return a, b, c

    def depth(self, x, y) -> np.ndarray:
        a, b, c = self.quadratic(x, y)
        disc = b * b - 4.0 * a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            q = -0.5 * (b + np.copysign(sq, b))
            z1 = q / a
            z2 = c / q
        z1 = np.where(z1 > 0, z1, np.inf)
        z2 = np.where(z2 > 0, z2, np.inf)
        z = np.minimum(z1, z2)
        return np.where(np.isfinite(z), z, np.nan)

    def inverse_depth(self, x, y) -> np.ndarray:
        return 1.0 / self.depth(x, y)


DepthModel = Union[PlanarFixedModel, PlanarSlopeModel, SphericalModel]


def _split(n):
    n = np.asarray(n, dtype=float)
    return n[..., 0], n[..., 1]


def planar_inverse_depth(n, m: PlanarFixedModel) -> np.ndarray:
    """Inverse depth of the fixed planar model; raises on rays above the plane horizon."""
    d = m.inverse_depth(*_split(n))
    if np.any(np.isnan(d)):
        raise NonPositiveDepth("ray does not intersect the plane in front of the camera")
    return d


def slope_inverse_depth(n, m: PlanarSlopeModel) -> np.ndarray:
    d = m.inverse_depth(*_split(n))
    if np.any(np.isnan(d)):
        raise NonPositiveDepth("ray does not intersect the plane in front of the camera")
    return d


def spherical_inverse_depth(n, m: SphericalModel) -> np.ndarray:
    """Inverse depth to the near intersection with the sphere."""
    d = m.inverse_depth(*_split(n))
    if np.any(np.isnan(d)):
        raise NoIntersection("ray misses the sphere")
    return d


def inverse_depth_grid(model: DepthModel, K: CameraIntrinsics, stride: int = 1) -> np.ma.MaskedArray:
    """Evaluate a model at the centre of every ``stride`` x ``stride`` pixel block.

    Cells whose ray misses the surface are masked.
    """
    stride = int(stride)
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    cols = np.arange(0, K.width - stride + 1, stride) + 0.5 * stride - 0.5
    rows = np.arange(0, K.height - stride + 1, stride) + 0.5 * stride - 0.5
    cc, rr = np.meshgrid(cols - K.cx, rows - K.cy)
    xn, yn = np.moveaxis(pixel_to_normalized(np.stack([cc, rr], axis=-1), K), -1, 0)
    d = model.inverse_depth(xn, yn)
    return np.ma.masked_invalid(d)
