"""Egomotion from sparse optical flow with rangefinder-scaled depth models."""

from .depth import PlanarFixedModel, PlanarSlopeModel, SphericalModel
from .estimators import MotionFieldRegressor
from .exceptions import (DomainError, FlowNavError, ImageTooSmall, InsufficientFeatures,
                         InvalidScenario, NoFeatures, NoIntersection, NonPositiveDepth,
                         RankDeficient, ZeroTruthVelocity)
from .flow import FlowField, LKParams, estimate_flow
from .geometry import (MOON_RADIUS, AngularRates, Attitude, CameraIntrinsics, UnitNormal,
                       attitude_to_plane_normal, attitude_to_sphere_geometry,
                       rotation_body_to_camera)
from .harness import (RunReport, ScenarioConfig, SweepConfig, load_config, run_oracle,
                      run_pipeline, run_sweep, simulate)
from .motion import (EgomotionEstimate, absolute_velocity_error, invert_linear, invert_slope,
                     predict_flow, relative_velocity_error)

__version__ = "0.1.0"

__all__ = [
    "AngularRates", "Attitude", "CameraIntrinsics", "DomainError", "EgomotionEstimate",
    "FlowField", "FlowNavError", "ImageTooSmall", "InsufficientFeatures", "InvalidScenario",
    "LKParams", "MOON_RADIUS", "MotionFieldRegressor", "NoFeatures", "NoIntersection",
    "NonPositiveDepth", "PlanarFixedModel", "PlanarSlopeModel", "RankDeficient", "RunReport",
    "ScenarioConfig", "SphericalModel", "SweepConfig", "UnitNormal", "ZeroTruthVelocity",
    "absolute_velocity_error", "attitude_to_plane_normal", "attitude_to_sphere_geometry",
    "estimate_flow", "invert_linear", "invert_slope", "load_config", "predict_flow",
    "relative_velocity_error", "rotation_body_to_camera", "run_oracle", "run_pipeline",
    "run_sweep", "simulate",
]
