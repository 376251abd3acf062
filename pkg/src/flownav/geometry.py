"""Pinhole camera model, attitude rotations and surface-normal geometry.

Pixel coordinates used throughout the library are *signed offsets from the
principal point* (x to the right, y down).  Raster coordinates (column, row
with the origin at the top-left pixel centre) only appear at image I/O
boundaries and are converted with :func:`raster_to_pixel`.

Euler convention: the body-to-camera rotation is ``Rz(psi) @ Ry(theta) @
Rx(phi)`` built from active elementary rotations, i.e. body vectors are
rotated about X first, then Y, then Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import DomainError, NoIntersection

MOON_RADIUS = 1_737_400.0


class Attitude(NamedTuple):
    """Body-to-camera rotation angles about X, Y, Z (rad)."""

    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0


class AngularRates(NamedTuple):
    """Camera-frame angular velocity (rad/s)."""

    p: float = 0.0
    q: float = 0.0
    r: float = 0.0


class UnitNormal(NamedTuple):
    """Surface normal direction in the camera frame, +gamma toward the surface."""

    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError(
                f"principal point ({self.cx}, {self.cy}) outside a "
                f"{self.width}x{self.height} sensor"
            )

    @classmethod
    def from_fov(cls, width: int, height: int | None = None, fov_deg: float = 45.0) -> "CameraIntrinsics":
        """Square-pixel camera with the given horizontal field of view.

        The principal point sits at the geometric image centre, i.e. at
        raster coordinate ``(width - 1) / 2``.
        """
        height = width if height is None else height
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, int(width), int(height))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width: int, height: int | None = None) -> "CameraIntrinsics":
        """Same field of view at a different resolution."""
        height = width if height is None else height
        s = width / self.width
        return CameraIntrinsics(
            self.fx * s, self.fy * height / self.height,
            (width - 1) / 2.0, (height - 1) / 2.0, int(width), int(height),
        )


def pixel_to_normalized(p, K: CameraIntrinsics) -> np.ndarray:
    """Principal-point-relative pixel offsets to ray slopes ``(X/Z, Y/Z)``."""
    p = np.asarray(p, dtype=float)
    return p / np.array([K.fx, K.fy])


def normalized_to_pixel(n, K: CameraIntrinsics) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return n * np.array([K.fx, K.fy])


def raster_to_pixel(rc, K: CameraIntrinsics) -> np.ndarray:
    """Raster ``(col, row)`` to principal-point-relative ``(x, y)``."""
    rc = np.asarray(rc, dtype=float)
    return rc - np.array([K.cx, K.cy])


def pixel_to_raster(p, K: CameraIntrinsics) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p + np.array([K.cx, K.cy])


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_body_to_camera(a: Sequence[float]) -> np.ndarray:
    """Rotation matrix mapping body-frame vectors to camera-frame vectors."""
    phi, theta, psi = (float(v) for v in a)
    return _rz(psi) @ _ry(theta) @ _rx(phi)


def rotation_body_to_camera_rate(a: Sequence[float], a_dot: Sequence[float]) -> np.ndarray:
    """Time derivative of :func:`rotation_body_to_camera` given Euler-angle rates."""
    phi, theta, psi = (float(v) for v in a)
    dphi, dtheta, dpsi = (float(v) for v in a_dot)
    ex = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    ey = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    ez = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    rx, ry, rz = _rx(phi), _ry(theta), _rz(psi)
    return (
        dpsi * ez @ rz @ ry @ rx
        + dtheta * rz @ ey @ ry @ rx
        + dphi * rz @ ry @ ex @ rx
    )


def attitude_to_plane_normal(a: Sequence[float]) -> UnitNormal:
    """Local-vertical plane normal in the camera frame.

    The body z axis points at the body centre, so a surface orthogonal to the
    local vertical has normal ``R_CB @ z_B``; a nadir camera gets (0, 0, 1).
    """
    k = rotation_body_to_camera(a)[:, 2]
    k = k / np.linalg.norm(k)
    return UnitNormal(float(k[0]), float(k[1]), float(k[2]))


def attitude_to_sphere_geometry(
    a: Sequence[float], rho: float, radius: float = MOON_RADIUS
) -> tuple[UnitNormal, float]:
    """Boresight surface normal and altitude for a spherical body.

    ``nu`` is the off-nadir angle of the boresight, the sine rule in the
    triangle (centre M, boresight point P, camera O) gives the angle ``mu`` at
    M, then ``lambda = pi - mu - nu`` and ``H + R = R sin(lambda) / sin(nu)``.
    The quotient is evaluated through the identity
    ``sin(lambda) / sin(nu) = (rho / R) cos(nu) + cos(mu)`` which is exact and
    reduces to ``H = rho`` at ``nu = 0`` without a 0/0.

    Returns the inward normal at P (planar convention, gamma > 0 at nadir)
    and the camera altitude H above the sphere.
    """
    if rho <= 0 or radius <= 0:
        raise DomainError(f"range and radius must be positive, got rho={rho}, R={radius}")
    down = rotation_body_to_camera(a)[:, 2]
    cos_nu = float(np.clip(down[2], -1.0, 1.0))
    nu = math.acos(cos_nu)
    sin_mu = rho / radius * math.sin(nu)
    if sin_mu > 1.0 or cos_nu <= 0.0:
        raise NoIntersection(f"boresight at nu={nu:.6f} rad cannot reach the sphere at rho={rho}")
    mu = math.asin(sin_mu)
    lam = math.pi - mu - nu
    if nu >= 1e-3:
        altitude = radius * math.sin(lam) / math.sin(nu) - radius
    else:
        # quotient loses digits as nu -> 0; same value, cancellation-free
        altitude = rho * cos_nu - 2.0 * radius * math.sin(0.5 * mu) ** 2
    centre = (altitude + radius) * down
    k = centre - np.array([0.0, 0.0, rho])
    k = k / np.linalg.norm(k)
    return UnitNormal(float(k[0]), float(k[1]), float(k[2])), float(altitude)


def ray_directions(points, K: CameraIntrinsics) -> np.ndarray:
    """Unnormalised camera-frame rays ``(x/fx, y/fy, 1)`` for pixel offsets."""
    n = pixel_to_normalized(points, K)
    n = np.atleast_2d(n)
    return np.column_stack([n, np.ones(len(n))])
