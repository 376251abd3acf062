"""Parametric descent and orbital trajectories with a nadir-pointing camera.

Plane scenarios live in a local frame with z up and the ground track along
+x.  Sphere scenarios use a body-centred frame with the ground track on the
equator, flying east.  In both cases the body frame has z toward the body
centre, x along the ground track and y completing the right-handed triad;
the camera frame is the body frame rotated by the sample's attitude.

Altitude and along-track speed follow cubic Hermite profiles that meet the
endpoint altitudes and vertical/horizontal speeds exactly.  A slow
sinusoidal attitude wobble keeps the angular rates non-trivial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
import numpy as np

from ..exceptions import InvalidScenario
from ..geometry import (MOON_RADIUS, Attitude, AngularRates, rotation_body_to_camera,
                        rotation_body_to_camera_rate)
from .render import CameraPose
from .terrain import Crater, Mound, TerrainSpec, incline_normal

MOON_GM = 4.9048695e12


@dataclass(frozen=True)
class Endpoints:
    """Altitude (m) and speed (m/s) boundary values; vertical speed is positive downward."""

    altitude0: float
    altitude1: float
    vertical0: float
    horizontal0: float
    vertical1: float
    horizontal1: float


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    attitude: Attitude
    rates: AngularRates
    body_to_world: np.ndarray = field(default_factory=lambda: np.eye(3), repr=False)

    @property
    def camera_to_world(self) -> np.ndarray:
        return self.body_to_world @ rotation_body_to_camera(self.attitude).T

    @property
    def pose(self) -> CameraPose:
        return CameraPose(self.position, self.camera_to_world)

    @property
    def camera_velocity(self) -> np.ndarray:
        """Translational velocity expressed in the camera frame."""
        return self.camera_to_world.T @ self.velocity


def _hermite(p0, p1, m0, m1, T):
    """Cubic on [0, T] with values p0, p1 and slopes m0, m1; returns value and two derivatives."""

    def f(t):
        s = t / T
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        d00 = (6 * s**2 - 6 * s) / T
        d10 = (3 * s**2 - 4 * s + 1) / T
        d01 = (-6 * s**2 + 6 * s) / T
        d11 = (3 * s**2 - 2 * s) / T
        val = h00 * p0 + h10 * T * m0 + h01 * p1 + h11 * T * m1
        der = d00 * p0 + d10 * T * m0 + d01 * p1 + d11 * T * m1
        return val, der

    return f


@dataclass(frozen=True)
class Wobble:
    """Sinusoidal attitude perturbation (amplitude in rad, periods in s)."""

    amplitude: float = math.radians(0.5)
    periods: tuple[float, float, float] = (23.0, 31.0, 47.0)
    phases: tuple[float, float, float] = (0.0, 1.0, 2.0)

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        a = np.empty(3)
        da = np.empty(3)
        for k, (period, ph) in enumerate(zip(self.periods, self.phases)):
            w = 2 * math.pi / period
            amp = self.amplitude * (0.5 if k == 2 else 1.0)
            a[k] = amp * math.sin(w * t + ph)
            da[k] = amp * w * math.cos(w * t + ph)
        return a, da


def _camera_rates(att, att_dot, B, B_dot) -> AngularRates:
    R = rotation_body_to_camera(att)
    R_dot = rotation_body_to_camera_rate(att, att_dot)
    W = B @ R.T
    W_dot = B_dot @ R.T + B @ R_dot.T
    S = W.T @ W_dot
    return AngularRates(float(0.5 * (S[2, 1] - S[1, 2])), float(0.5 * (S[0, 2] - S[2, 0])),
                        float(0.5 * (S[1, 0] - S[0, 1])))


@dataclass(frozen=True)
class Leg:
    """One smooth segment: cubic altitude and along-track speed laws over ``duration``."""

    endpoints: Endpoints
    duration: float
    lateral: float = 0.0

    def __post_init__(self) -> None:
        e = self.endpoints
        if not self.duration > 0:
            raise InvalidScenario("leg duration must be positive")
        if e.altitude0 < e.altitude1:
            raise InvalidScenario("descending legs need initial altitude >= final altitude")


class Trajectory:
    """Continuous-time trajectory; :meth:`sample` evaluates the full state at t."""

    def __init__(self, name: str, kind: str, legs: list[Leg], terrain: TerrainSpec,
                 wobble: Wobble | None = None, radius: float = MOON_RADIUS,
                 model_switch_altitude: float | None = None):
        if kind not in ("plane", "sphere"):
            raise InvalidScenario(f"unknown trajectory kind {kind!r}")
        if not legs:
            raise InvalidScenario("a trajectory needs at least one leg")
        self.name = name
        self.kind = kind
        self.legs = list(legs)
        self.terrain = terrain
        self.wobble = wobble if wobble is not None else Wobble()
        self.radius = radius
        self.model_switch_altitude = model_switch_altitude
        self.starts = np.concatenate([[0.0], np.cumsum([lg.duration for lg in self.legs])])
        self._alt = [_hermite(lg.endpoints.altitude0, lg.endpoints.altitude1,
                              -lg.endpoints.vertical0, -lg.endpoints.vertical1, lg.duration)
                     for lg in self.legs]
        # along-track distance offsets so legs join continuously
        self._x0 = [0.0]
        for k, lg in enumerate(self.legs[:-1]):
            self._x0.append(self._x0[-1] + self._along(k, lg.duration)[0])

    @property
    def duration(self) -> float:
        return float(self.starts[-1])

    def _leg(self, t: float) -> tuple[int, float]:
        if t < -1e-9 or t > self.duration + 1e-9:
            raise InvalidScenario(f"t={t} outside [0, {self.duration}]")
        k = int(np.searchsorted(self.starts, t, side="right") - 1)
        k = min(max(k, 0), len(self.legs) - 1)
        return k, min(max(t - self.starts[k], 0.0), self.legs[k].duration)

    def _along(self, k: int, tau: float) -> tuple[float, float]:
        """Along-track distance/angle and its rate within leg k."""
        lg = self.legs[k]
        e = lg.endpoints
        T = lg.duration
        if self.kind == "plane":
            # horizontal speeds at both ends, plus a smooth lateral displacement
            s = tau / T
            x = (e.horizontal0 * tau + 0.5 * (e.horizontal1 - e.horizontal0) * tau * s
                 + lg.lateral * (3 * s**2 - 2 * s**3))
            dx = e.horizontal0 + (e.horizontal1 - e.horizontal0) * s + lg.lateral * 6 * s * (1 - s) / T
            return x, dx
        w0 = e.horizontal0 / (self.radius + e.altitude0)
        w1 = e.horizontal1 / (self.radius + e.altitude1)
        return w0 * tau + 0.5 * (w1 - w0) * tau**2 / T, w0 + (w1 - w0) * tau / T

    def sample(self, t: float) -> TrajectorySample:
        k, tau = self._leg(t)
        h, dh = self._alt[k](tau)
        x, dx = self._along(k, tau)
        x += self._x0[k]
        att, att_dot = self.wobble(t)
        if self.kind == "plane":
            x -= self._x0[-1] + self._along(len(self.legs) - 1, self.legs[-1].duration)[0]
            pos = np.array([x, 0.0, h])
            vel = np.array([dx, 0.0, dh])
            B = np.column_stack([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
            B_dot = np.zeros((3, 3))
        else:
            th, dth = x, dx
            up = np.array([math.cos(th), math.sin(th), 0.0])
            tan = np.array([-math.sin(th), math.cos(th), 0.0])
            r = self.radius + h
            pos = r * up
            vel = dh * up + r * dth * tan
            B = np.column_stack([tan, [0.0, 0.0, -1.0], -up])
            B_dot = dth * np.column_stack([-up, [0.0, 0.0, 0.0], -tan])
        rates = _camera_rates(att, att_dot, B, B_dot)
        return TrajectorySample(float(t), pos, vel, Attitude(*map(float, att)), rates, B)

    def altitude(self, t: float) -> float:
        k, tau = self._leg(t)
        return float(self._alt[k](tau)[0])

    def times(self, frame_rate: float, t_start: float = 0.0,
              t_end: float | None = None) -> np.ndarray:
        if not frame_rate > 0:
            raise InvalidScenario("frame rate must be positive")
        t_end = self.duration if t_end is None else min(t_end, self.duration)
        if not 0.0 <= t_start < t_end:
            raise InvalidScenario(f"empty time window [{t_start}, {t_end}]")
        n = int(math.floor((t_end - t_start) * frame_rate + 1e-9)) + 1
        return t_start + np.arange(n) / frame_rate


# Table of scenario endpoints (altitudes in m, speeds in m/s).
LANDING_ENDPOINTS = {
    "flat": Endpoints(4000.0, 100.0, 100.0, 0.0, 0.0, 0.0),
    "peak": Endpoints(11250.8, 7350.8, 100.0, 0.0, 0.0, 0.0),
    "crater": Endpoints(4000.0, 100.0, 100.0, 0.0, 0.0, 0.0),
    "incline": Endpoints(8661.4, 4761.4, 100.0, 0.0, 0.0, 0.0),
}
HOHMANN_ENDPOINTS = Endpoints(300e3, 4e3, 0.18, 1489.26, 0.25, 1742.40)
TRANSFER_ENDPOINTS = Endpoints(102013.0, 0.0, 0.217, 1633.50, 0.01, 0.45)
SCENARIOS = ("flat", "peak", "crater", "incline", "hohmann", "transfer_to_landing")
SITE_CLEARANCE = 100.0
INCLINE_TILT_DEG = 15.0
INCLINE_AZIMUTH_DEG = 30.0
PDI_ALTITUDE = 15000.0
BRAKING_DECEL = 2.0
MODEL_SWITCH_ALTITUDE = 4000.0


def half_orbit_time(r_a: float, r_p: float) -> float:
    a = 0.5 * (r_a + r_p)
    return math.pi * math.sqrt(a**3 / MOON_GM)


def periapsis_speed(r_a: float, r_p: float) -> float:
    a = 0.5 * (r_a + r_p)
    return math.sqrt(MOON_GM * (2.0 / r_p - 1.0 / a))


def landing_terrain(name: str, seed: int = 0, **overrides) -> TerrainSpec:
    """Procedural stand-ins for the four landing-site classes."""
    e = LANDING_ENDPOINTS[name]
    site = e.altitude1 - SITE_CLEARANCE
    if name == "flat":
        spec = TerrainSpec(origin=(0.0, 0.0, site), seed=seed)
    elif name == "crater":
        depth = 1500.0
        spec = TerrainSpec(origin=(0.0, 0.0, site + depth),
                           craters=(Crater(0.0, 0.0, 12000.0, depth),), seed=seed)
    elif name == "peak":
        spec = TerrainSpec(origin=(0.0, 0.0, 0.0), mounds=(Mound(0.0, 0.0, 40000.0, site),),
                           seed=seed)
    elif name == "incline":
        spec = TerrainSpec(origin=(0.0, 0.0, site),
                           normal=incline_normal(INCLINE_TILT_DEG, INCLINE_AZIMUTH_DEG), seed=seed)
    else:
        raise InvalidScenario(f"unknown landing site {name!r}")
    return replace(spec, **overrides) if overrides else spec


def orbital_terrain(seed: int = 0, pad=None, **overrides) -> TerrainSpec:
    spec = TerrainSpec(kind="sphere", roughness=0.004, max_wavelength=64000.0, octaves=14,
                       crater_cell=32000.0, crater_layers=5, pad=pad, seed=seed)
    return replace(spec, **overrides) if overrides else spec


def build_trajectory(scenario: str, *, duration: float | None = None,
                     endpoints: Endpoints | None = None, lateral: float = 500.0,
                     wobble: Wobble | None = None, seed: int = 0,
                     terrain: TerrainSpec | None = None) -> Trajectory:
    """Continuous trajectory for a named scenario.

    Landings default to a 60 s descent.  ``hohmann`` lasts half a transfer
    orbit.  ``transfer_to_landing`` chains a half-orbit coast down to the
    powered-descent altitude, a constant-deceleration braking phase that
    kills the horizontal speed by the model-switch altitude, and a final
    vertical descent to the surface.
    """
    if scenario in LANDING_ENDPOINTS:
        e = endpoints or LANDING_ENDPOINTS[scenario]
        leg = Leg(e, 60.0 if duration is None else duration, lateral)
        return Trajectory(scenario, "plane", [leg],
                          terrain or landing_terrain(scenario, seed), wobble)
    R = MOON_RADIUS
    if scenario == "hohmann":
        e = endpoints or HOHMANN_ENDPOINTS
        T = duration or half_orbit_time(R + e.altitude0, R + e.altitude1)
        return Trajectory(scenario, "sphere", [Leg(e, T)], terrain or orbital_terrain(seed),
                          wobble)
    if scenario == "transfer_to_landing":
        e = endpoints or TRANSFER_ENDPOINTS
        switch = MODEL_SWITCH_ALTITUDE
        vp = periapsis_speed(R + e.altitude0, R + PDI_ALTITUDE)
        coast = Leg(Endpoints(e.altitude0, PDI_ALTITUDE, e.vertical0, e.horizontal0, 5.0, vp),
                    half_orbit_time(R + e.altitude0, R + PDI_ALTITUDE))
        brake = Leg(Endpoints(PDI_ALTITUDE, switch, 5.0, vp, 30.0, 0.0), vp / BRAKING_DECEL)
        final = Leg(Endpoints(switch, e.altitude1, 30.0, 0.0, e.vertical1, e.horizontal1),
                    200.0 if duration is None else duration - coast.duration - brake.duration)
        traj = Trajectory(scenario, "sphere", [coast, brake, final], TerrainSpec(kind="sphere"),
                          wobble, model_switch_altitude=switch)
        end = traj.sample(traj.duration).position
        site = (R * math.atan2(end[1], end[0]), 0.0, 2000.0)
        traj.terrain = terrain or orbital_terrain(seed, pad=site)
        return traj
    raise InvalidScenario(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")


def generate_trajectory(scenario: str, frame_rate: float = 4.0, *, t_start: float = 0.0,
                        t_end: float | None = None, **kwargs) -> list[TrajectorySample]:
    """Samples of a named scenario at ``frame_rate`` over ``[t_start, t_end]``."""
    traj = build_trajectory(scenario, **kwargs)
    return [traj.sample(t) for t in traj.times(frame_rate, t_start, t_end)]
