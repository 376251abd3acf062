"""Desk-scale lunar descent simulator: terrain, trajectories, rendering and sensors."""

from .render import (CameraPose, SunConfig, auto_exposure, ground_truth_flow, project,
                     quantize, raycast_depth, raycast_depths, render_frame, render_radiance)
from .sensors import NoiseConfig, add_camera_noise, add_state_noise, rangefinder_reading
from .terrain import Crater, Mound, Terrain, TerrainSpec, incline_normal
from .trajectory import (SCENARIOS, Endpoints, Trajectory, TrajectorySample, Wobble,
                         build_trajectory, generate_trajectory)

__all__ = [
    "CameraPose", "Crater", "Endpoints", "Mound", "NoiseConfig", "SCENARIOS", "SunConfig",
    "Terrain", "TerrainSpec", "Trajectory", "TrajectorySample", "Wobble", "add_camera_noise",
    "add_state_noise", "auto_exposure", "build_trajectory", "generate_trajectory",
    "ground_truth_flow", "incline_normal", "project", "quantize", "rangefinder_reading",
    "raycast_depth", "raycast_depths", "render_frame", "render_radiance",
]
