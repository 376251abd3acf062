"""Camera poses, ray-cast depth, shaded frames and ground-truth flow."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import NoIntersection
from ..flow import FlowField
from ..geometry import CameraIntrinsics, ray_directions
from ..motion import predict_flow
from . import _kernels as K_
from .terrain import Terrain


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera position (world, m) and camera-to-world rotation."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, float).reshape(3, 3))

    @classmethod
    def nadir(cls, position, along=(1.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Camera boresight along ``-up`` with image x along ``along``."""
        z = -np.asarray(up, float)
        z /= np.linalg.norm(z)
        x = np.asarray(along, float) - z * (np.asarray(along, float) @ z)
        x /= np.linalg.norm(x)
        return cls(position, np.column_stack([x, np.cross(z, x), z]))

    def world_rays(self, points, K: CameraIntrinsics) -> np.ndarray:
        """Unit world directions through principal-point-relative pixels."""
        r = ray_directions(points, K)
        d = r @ self.rotation.T
        return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class SunConfig:
    """Sun direction as azimuth (from north toward east) and elevation, radians.

    The direction is fixed in the world frame using the local horizon at a
    reference point, typically the first trajectory sample.
    """

    azimuth: float = math.radians(135.0)
    elevation: float = math.radians(20.0)

    def __post_init__(self) -> None:
        if not -math.pi / 2 <= self.elevation <= math.pi / 2:
            raise ValueError(f"sun elevation {self.elevation} outside [-pi/2, pi/2]")

    def direction(self, terrain: Terrain, reference=(0.0, 0.0, 0.0)) -> np.ndarray:
        if terrain.is_sphere:
            up = terrain.up(reference)
            east = np.array([-up[1], up[0], 0.0])
            if np.linalg.norm(east) < 1e-12:
                east = np.array([0.0, 1.0, 0.0])
            east /= np.linalg.norm(east)
        else:
            up = np.array([0.0, 0.0, 1.0])
            east = np.array([1.0, 0.0, 0.0])
        north = np.cross(up, east)
        ce = math.cos(self.elevation)
        s = (ce * math.cos(self.azimuth) * north + ce * math.sin(self.azimuth) * east
             + math.sin(self.elevation) * up)
        return s / np.linalg.norm(s)


def render_radiance(terrain: Terrain, pose: CameraPose, sun_direction, K: CameraIntrinsics,
                    step_tol: float = K_.RENDER_STEP_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled Lambertian radiance and Z-depth for every pixel (NaN depth for sky)."""
    radiance = np.empty((K.height, K.width))
    depth = np.empty((K.height, K.width))
    K_.render_kernel(pose.position, pose.rotation, K.fx, K.fy, K.cx, K.cy, K.width, K.height,
                     np.asarray(sun_direction, float), step_tol / K.fx, *terrain.tables,
                     radiance, depth)
    return radiance, depth


DEFAULT_GAMMA = 0.5


def auto_exposure(radiance: np.ndarray, percentile: float = 99.0, target: float = 235.0,
                  gamma: float = DEFAULT_GAMMA) -> float:
    """Gain that maps the given percentile of lit radiance to ``target`` grey levels."""
    lit = radiance[radiance > 0]
    if lit.size == 0:
        return 1.0
    ref = float(np.percentile(lit, percentile))
    return (target / 255.0) ** (1.0 / gamma) / ref if ref > 0 else 1.0


def quantize(radiance: np.ndarray, gain: float, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Fixed global tone curve ``255 (gain L)^gamma``, rounded to 8 bits."""
    return np.clip(np.rint(255.0 * (radiance * gain) ** gamma), 0, 255).astype(np.uint8)


def render_frame(terrain: Terrain, pose: CameraPose, sun: SunConfig, K: CameraIntrinsics,
                 gain: float | None = None, sun_reference=None) -> np.ndarray:
    """8-bit shaded image; ``gain=None`` picks an exposure from this frame."""
    ref = pose.position if sun_reference is None else sun_reference
    radiance, _ = render_radiance(terrain, pose, sun.direction(terrain, ref), K)
    if gain is None:
        gain = auto_exposure(radiance)
    return quantize(radiance, gain)


def raycast_depths(terrain: Terrain, pose: CameraPose, points, K: CameraIntrinsics) -> np.ndarray:
    """Z-depth along each pixel ray; NaN where the ray misses."""
    pts = np.atleast_2d(np.asarray(points, float))
    rays = ray_directions(pts, K)
    t = terrain.raycast(pose.position, rays @ pose.rotation.T)
    return t / np.linalg.norm(rays, axis=1)


def raycast_depth(terrain: Terrain, pose: CameraPose, points, K: CameraIntrinsics):
    """Exact Z-depth of the terrain along pixel rays; raises on any miss."""
    scalar = np.ndim(points) == 1
    z = raycast_depths(terrain, pose, points, K)
    if np.any(np.isnan(z)):
        raise NoIntersection("pixel ray does not reach the terrain")
    return float(z[0]) if scalar else z


def ground_truth_flow(terrain: Terrain, pose: CameraPose, v, w, points,
                      K: CameraIntrinsics) -> FlowField:
    """Motion field at pixels from the exact ray-cast depth.

    ``v`` and ``w`` are the camera-frame translational and angular velocity.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    z = raycast_depth(terrain, pose, pts, K)
    return FlowField(pts, predict_flow(pts, 1.0 / np.atleast_1d(z), v, w, K))


def project(pose: CameraPose, world_points, K: CameraIntrinsics) -> np.ndarray:
    """Principal-point-relative pixel coordinates of world points."""
    p = np.atleast_2d(np.asarray(world_points, float)) - pose.position
    c = p @ pose.rotation
    return np.column_stack([K.fx * c[:, 0] / c[:, 2], K.fy * c[:, 1] / c[:, 2]])
