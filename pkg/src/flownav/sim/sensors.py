"""Sensor emulation: rangefinder, camera noise and IMU-state noise.

Every random draw comes from its own stream keyed by ``(seed, purpose,
key)`` so results do not depend on call order or threading.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..geometry import AngularRates, Attitude, CameraIntrinsics
from .render import CameraPose, raycast_depth
from .terrain import Terrain
from .trajectory import TrajectorySample

_CAMERA, _STATE, _RANGE = 1, 2, 3


@dataclass(frozen=True)
class NoiseConfig:
    camera_sigma: float = 0.0
    attitude_sigma: float = 0.0
    rate_sigma: float = 0.0
    range_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("camera_sigma", "attitude_sigma", "rate_sigma", "range_sigma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


def stream(seed: int, purpose: int, key: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), purpose, int(key)]))


def rangefinder_reading(terrain: Terrain, pose: CameraPose, K: CameraIntrinsics,
                        noise: NoiseConfig = NoiseConfig(), key: int = 0) -> float:
    """Boresight range with multiplicative Gaussian error of relative STD ``range_sigma``."""
    z = raycast_depth(terrain, pose, np.zeros(2), K)
    if noise.range_sigma == 0:
        return z
    return z * (1.0 + noise.range_sigma * stream(noise.seed, _RANGE, key).standard_normal())


def add_camera_noise(img: np.ndarray, noise: NoiseConfig, key: int = 0) -> np.ndarray:
    """I.i.d. Gaussian intensity noise, rounded and clamped to 8 bits."""
    if noise.camera_sigma == 0:
        return img.copy()
    g = stream(noise.seed, _CAMERA, key).standard_normal(img.shape)
    return np.clip(np.rint(img + noise.camera_sigma * g), 0, 255).astype(np.uint8)


def add_state_noise(sample: TrajectorySample, noise: NoiseConfig, key: int = 0) -> TrajectorySample:
    """Perturb attitude and angular rates; position and velocity stay exact."""
    if noise.attitude_sigma == 0 and noise.rate_sigma == 0:
        return sample
    g = stream(noise.seed, _STATE, key).standard_normal(6)
    att = Attitude(*(np.asarray(sample.attitude) + noise.attitude_sigma * g[:3]).tolist())
    rates = AngularRates(*(np.asarray(sample.rates) + noise.rate_sigma * g[3:]).tolist())
    return replace(sample, attitude=att, rates=rates)
