"""Scenario runner: frames -> flow -> inversion -> per-frame metrics and reports.

A run walks frame pairs ``(t0, t1)``.  Flow vectors are anchored at the
midpoint of their tracks, so each pair is compared with the exact
camera-frame velocity at ``(t0 + t1) / 2``; attitude, rates and range are
averaged over the two frames, which is the linear interpolation of the
sensor streams to the midpoint.
"""

from __future__ import annotations

import csv
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .depth import PlanarFixedModel
from .estimators import MotionFieldRegressor
from .exceptions import FlowNavError, InvalidScenario
from .flow import LKParams, build_pyramid, estimate_flow
from .geometry import (CameraIntrinsics, attitude_to_plane_normal,
                       attitude_to_sphere_geometry)
from .io import (TelemetryRecord, read_config, read_pgm, read_telemetry, write_config,
                 write_pgm, write_telemetry)
from .motion import absolute_velocity_error, invert_linear, relative_velocity_error
from .sim.render import (SunConfig, auto_exposure, ground_truth_flow, quantize, raycast_depth,
                         render_radiance)
from .sim.sensors import NoiseConfig, add_camera_noise, add_state_noise, rangefinder_reading
from .sim.terrain import Terrain, TerrainSpec
from .sim.trajectory import SCENARIOS, Endpoints, Trajectory, build_trajectory

MODEL_CHOICES = ("auto", "planar", "slope", "sphere")
SWEEP_AXES = ("resolution", "frame_rate", "camera_sigma", "state_sigma")
EXCLUDE_SPEED = 0.01  # m/s; relative error is not aggregated below this truth speed
FRAME_DIR = "frames"
TELEMETRY_FILE = "telemetry.csv"
CONFIG_FILE = "config.cfg"

_LK_KEYS = tuple(f.name for f in fields(LKParams))
_ENDPOINT_KEYS = tuple(f.name for f in fields(Endpoints))
_TERRAIN_KEYS = ("roughness", "crater_probability", "albedo_contrast")
_FLOAT_KEYS = {"frame_rate", "fov_deg", "duration", "t_start", "t_end", "pair_span", "lateral",
               "sun_azimuth_deg", "sun_elevation_deg", "camera_sigma", "attitude_sigma",
               "rate_sigma", "range_sigma", "state_sigma", *_ENDPOINT_KEYS, *_TERRAIN_KEYS}
_INT_KEYS = {"seed", "resolution", "pairs"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that defines a run; a pure function of these fields and ``seed``.

    ``pairs = 0`` evaluates every consecutive frame pair in ``[t_start, t_end]``.
    ``pairs = n`` evaluates ``n`` pairs whose first frames are evenly spaced
    over the window, leaving ``pair_span`` seconds (default one frame
    interval) after the last one; sweeps use a common span so every swept value
    sees the same anchor times.
    """

    scenario: str = "flat"
    seed: int = 0
    frame_rate: float = 4.0
    resolution: int = 1024
    fov_deg: float = 45.0
    model: str = "auto"
    duration: Optional[float] = None
    t_start: float = 0.0
    t_end: Optional[float] = None
    pairs: int = 0
    pair_span: Optional[float] = None
    lateral: float = 500.0
    sun_azimuth_deg: float = 135.0
    sun_elevation_deg: float = 20.0
    lk: LKParams = field(default_factory=LKParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    endpoints: Optional[Endpoints] = None
    terrain: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise InvalidScenario(f"unknown scenario {self.scenario!r}; "
                                  f"choose from {', '.join(SCENARIOS)}")
        r = int(self.resolution)
        if r < 128 or r & (r - 1):
            raise InvalidScenario(f"resolution must be a power of two >= 128, got {r}")
        if not self.frame_rate > 0:
            raise InvalidScenario("frame_rate must be positive")
        if self.model not in MODEL_CHOICES:
            raise InvalidScenario(f"model must be one of {MODEL_CHOICES}, got {self.model!r}")
        if self.pairs < 0:
            raise InvalidScenario("pairs must be >= 0")
        if self.pair_span is not None and self.pair_span < 1.0 / self.frame_rate:
            raise InvalidScenario("pair_span must cover at least one frame interval")
        if self.noise.seed != self.seed:
            object.__setattr__(self, "noise", replace(self.noise, seed=int(self.seed)))

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(int(self.resolution), fov_deg=self.fov_deg)

    @property
    def sun(self) -> SunConfig:
        return SunConfig(math.radians(self.sun_azimuth_deg), math.radians(self.sun_elevation_deg))

    def trajectory(self) -> Trajectory:
        traj = build_trajectory(self.scenario, duration=self.duration, endpoints=self.endpoints,
                                lateral=self.lateral, seed=self.seed)
        if self.terrain:
            traj.terrain = replace(traj.terrain, **dict(self.terrain))
        return traj

    def with_value(self, key: str, value) -> "ScenarioConfig":
        """Copy with one flat config key changed (noise and LK keys included)."""
        return from_mapping({**to_mapping(self), key: value})


def _parse_value(key: str, raw):
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        return None
    if key in _INT_KEYS:
        f = float(raw)
        if f != int(f):
            raise InvalidScenario(f"{key} must be an integer, got {raw!r}")
        return int(f)
    if key in _FLOAT_KEYS or key in ("epsilon", "quality_level", "min_distance",
                                     "min_eig_threshold"):
        return float(raw)
    if key in _LK_KEYS:
        return int(float(raw))
    return str(raw).strip()


def from_mapping(values: Mapping[str, object]) -> ScenarioConfig:
    """Build a config from flat ``key -> value`` pairs (strings accepted)."""
    known = ({f.name for f in fields(ScenarioConfig)} - {"lk", "noise", "endpoints", "terrain"}
             | set(_LK_KEYS) | set(_ENDPOINT_KEYS) | set(_TERRAIN_KEYS)
             | {"camera_sigma", "attitude_sigma", "rate_sigma", "range_sigma", "state_sigma"})
    unknown = set(values) - known
    if unknown:
        raise InvalidScenario(f"unknown config keys: {', '.join(sorted(unknown))}")
    v = {k: _parse_value(k, raw) for k, raw in values.items()}
    v = {k: x for k, x in v.items() if x is not None}
    lk = LKParams(**{k: v.pop(k) for k in _LK_KEYS if k in v})
    state = v.pop("state_sigma", None)
    noise_kw = {k: v.pop(k) for k in ("camera_sigma", "attitude_sigma", "rate_sigma",
                                      "range_sigma") if k in v}
    if state is not None:
        # shorthand for equal attitude (rad) and rate (rad/s) noise; wins over both
        noise_kw.update(attitude_sigma=state, rate_sigma=state)
    ep = {k: v.pop(k) for k in _ENDPOINT_KEYS if k in v}
    endpoints = None
    if ep:
        if len(ep) != len(_ENDPOINT_KEYS):
            raise InvalidScenario(f"endpoint overrides need all of {', '.join(_ENDPOINT_KEYS)}")
        endpoints = Endpoints(**ep)
    terrain = tuple(sorted((k, v.pop(k)) for k in _TERRAIN_KEYS if k in v))
    return ScenarioConfig(lk=lk, noise=NoiseConfig(**noise_kw), endpoints=endpoints,
                          terrain=terrain, **v)


def to_mapping(cfg: ScenarioConfig) -> dict[str, object]:
    """Flat ``key -> value`` view; ``from_mapping(to_mapping(c)) == c``."""
    out: dict[str, object] = {}
    for f in fields(ScenarioConfig):
        if f.name in ("lk", "noise", "endpoints", "terrain"):
            continue
        out[f.name] = getattr(cfg, f.name)
    out.update(asdict(cfg.lk))
    out.update({k: getattr(cfg.noise, k) for k in ("camera_sigma", "attitude_sigma",
                                                   "rate_sigma", "range_sigma")})
    if cfg.endpoints is not None:
        out.update(asdict(cfg.endpoints))
    out.update(dict(cfg.terrain))
    return out


def load_config(path, **overrides) -> ScenarioConfig:
    values: dict[str, object] = dict(read_config(path))
    values.update({k: x for k, x in overrides.items() if x is not None})
    return from_mapping(values)


def _time_key(t: float) -> int:
    # noise streams are keyed by frame time (ms) so a frame is identical across runs
    return int(round(t * 1000.0))


class SimulatedSource:
    """Renders frames and emulates sensors for a config.

    Clean 8-bit frames are cached by render inputs and time.  Without a
    shared ``cache`` only the last few frames are kept; sweeps pass one dict
    to every run so each frame is rendered once.  Exposure gain is fixed by
    the first frame of the run.
    """

    _KEEP = 4

    def __init__(self, cfg: ScenarioConfig, cache: Optional[dict] = None):
        self.cfg = cfg
        self.K = cfg.intrinsics
        self.trajectory = cfg.trajectory()
        self.terrain = Terrain(self.trajectory.terrain)
        self.sun = cfg.sun
        self._bounded = cache is None
        self._cache = OrderedDict() if cache is None else cache
        self._gain: Optional[float] = None
        self._signature = (cfg.scenario, cfg.seed, cfg.resolution, cfg.fov_deg,
                           cfg.sun_azimuth_deg, cfg.sun_elevation_deg, cfg.duration,
                           cfg.lateral, cfg.endpoints, cfg.terrain)

    def pair_times(self) -> list[tuple[float, float]]:
        cfg, traj = self.cfg, self.trajectory
        dt = 1.0 / cfg.frame_rate
        t_end = traj.duration if cfg.t_end is None else min(cfg.t_end, traj.duration)
        if cfg.pairs == 0:
            ts = traj.times(cfg.frame_rate, cfg.t_start, t_end)
            return [(float(a), float(b)) for a, b in zip(ts[:-1], ts[1:])]
        span = dt if cfg.pair_span is None else cfg.pair_span
        last = t_end - span
        if last < cfg.t_start - 1e-9:
            raise InvalidScenario("time window shorter than the pair span")
        anchors = np.linspace(cfg.t_start, max(last, cfg.t_start), cfg.pairs)
        return [(float(a), float(a + dt)) for a in anchors]

    def radiance(self, t: float) -> np.ndarray:
        """Unscaled radiance with the sun fixed in the local horizon at the camera."""
        s = self.trajectory.sample(t)
        sun = self.sun.direction(self.terrain, s.position)
        return render_radiance(self.terrain, s.pose, sun, self.K)[0]

    def gain(self) -> float:
        if self._gain is None:
            t0 = self.pair_times()[0][0]
            key = ("gain", self._signature, round(t0, 9))
            if key not in self._cache:
                self._cache[key] = auto_exposure(self.radiance(t0))
            self._gain = float(self._cache[key])
        return self._gain

    def clean_image(self, t: float) -> np.ndarray:
        key = (self._signature, self.gain(), round(t, 9))
        img = self._cache.get(key)
        if img is None:
            img = quantize(self.radiance(t), self.gain())
            self._cache[key] = img
            if self._bounded:
                while len(self._cache) > self._KEEP:
                    self._cache.popitem(last=False)
        return img

    def image(self, t: float) -> np.ndarray:
        return add_camera_noise(self.clean_image(t), self.cfg.noise, _time_key(t))

    def sensors(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """Attitude, rates and range as the navigation filter would see them at t."""
        s = self.trajectory.sample(t)
        key = _time_key(t)
        noisy = add_state_noise(s, self.cfg.noise, key)
        rho = rangefinder_reading(self.terrain, s.pose, self.K, self.cfg.noise, key)
        return np.asarray(noisy.attitude), np.asarray(noisy.rates), float(rho)


class DirectorySource:
    """Frames and telemetry written by :func:`simulate`."""

    def __init__(self, directory, cfg: Optional[ScenarioConfig] = None):
        self.dir = Path(directory)
        self.cfg = cfg or load_config(self.dir / CONFIG_FILE)
        self.K = self.cfg.intrinsics
        self.trajectory = self.cfg.trajectory()
        self.records = read_telemetry(self.dir / TELEMETRY_FILE)
        if len(self.records) < 2:
            raise InvalidScenario(f"{self.dir}: need at least two frames")
        self._index = {round(r.t, 9): i for i, r in enumerate(self.records)}

    def pair_times(self) -> list[tuple[float, float]]:
        ts = [r.t for r in self.records]
        return list(zip(ts[:-1], ts[1:]))

    def _rec(self, t: float) -> tuple[int, TelemetryRecord]:
        i = self._index[round(t, 9)]
        return i, self.records[i]

    def image(self, t: float) -> np.ndarray:
        i, _ = self._rec(t)
        img = read_pgm(self.dir / FRAME_DIR / f"frame_{i:05d}.pgm")
        if img.shape != (self.K.height, self.K.width):
            raise InvalidScenario(f"frame {i} is {img.shape}, config expects "
                                  f"{(self.K.height, self.K.width)}")
        return img

    def sensors(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        _, r = self._rec(t)
        return np.array([r.phi, r.theta, r.psi]), np.array([r.p, r.q, r.r]), r.rho


@dataclass(frozen=True)
class FrameRecord:
    """Outcome of one frame pair; failed pairs carry NaN estimates and a status."""

    index: int
    t0: float
    t1: float
    altitude: float
    model: str
    status: str
    estimate: tuple[float, float, float]
    truth: tuple[float, float, float]
    rel_error: float
    abs_error: float
    excluded: bool
    n_features: int
    residual_rms: float
    condition_ok: bool
    slope: tuple[float, float] = (math.nan, math.nan)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def t_mid(self) -> float:
        return 0.5 * (self.t0 + self.t1)


FRAME_COLUMNS = ("index", "t0", "t1", "t_mid", "altitude", "model", "status",
                 "est_vx", "est_vy", "est_vz", "true_vx", "true_vy", "true_vz",
                 "rel_error", "abs_error", "excluded", "n_features", "residual_rms",
                 "condition_ok", "alpha", "beta", "message")
SUMMARY_COLUMNS = ("group", "trajectory", "mean_abs_error_mps", "rel_mean", "rel_max",
                   "rel_min", "rel_std", "rel_max_all", "n_pairs", "n_used", "n_excluded",
                   "n_failed")
_GROUPS = {"hohmann": ("Orbital", "Hohmann Transfer"),
           "transfer_to_landing": ("End-to-End", "Full Transfer to Landing")}


def aggregate(frames: Sequence[FrameRecord]) -> dict[str, float]:
    """Table-style statistics of the relative error over non-excluded, successful pairs.

    ``rel_max_all`` also covers the excluded low-speed pairs.  Standard
    deviation is the population value.
    """
    ok = [f for f in frames if f.ok]
    used = np.array([f.rel_error for f in ok if not f.excluded], dtype=float)
    every = np.array([f.rel_error for f in ok if not math.isnan(f.rel_error)], dtype=float)
    absolute = np.array([f.abs_error for f in ok], dtype=float)
    nan = math.nan
    return {
        "mean_abs_error_mps": float(absolute.mean()) if absolute.size else nan,
        "rel_mean": float(used.mean()) if used.size else nan,
        "rel_max": float(used.max()) if used.size else nan,
        "rel_min": float(used.min()) if used.size else nan,
        "rel_std": float(used.std()) if used.size else nan,
        "rel_max_all": float(every.max()) if every.size else nan,
        "n_pairs": len(frames),
        "n_used": int(used.size),
        "n_excluded": sum(1 for f in ok if f.excluded),
        "n_failed": len(frames) - len(ok),
    }


@dataclass
class RunReport:
    scenario: str
    config: dict
    frames: list[FrameRecord]
    # wall-clock seconds spent in flow + inversion (not exported; not deterministic)
    timings: list[float] = field(default_factory=list, repr=False)

    @property
    def summary(self) -> dict[str, float]:
        return aggregate(self.frames)

    @property
    def mean_relative_error(self) -> float:
        return self.summary["rel_mean"]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(f, name) for f in self.frames])


def _choose_model(cfg: ScenarioConfig, traj: Trajectory, att, rho: float) -> str:
    if cfg.model != "auto":
        return cfg.model
    if traj.kind == "plane":
        return "planar"
    if traj.model_switch_altitude is not None:
        try:
            _, h = attitude_to_sphere_geometry(att, rho, traj.radius)
        except FlowNavError:
            return "planar"
        if h <= traj.model_switch_altitude:
            return "planar"
    return "sphere"


def _model_normal(model: str, att, rho: float, radius: float):
    if model == "sphere":
        return attitude_to_sphere_geometry(att, rho, radius)[0]
    if model == "planar":
        return attitude_to_plane_normal(att)
    return None


def _failure(index, t0, t1, alt, model, truth, exc) -> FrameRecord:
    nan3 = (math.nan,) * 3
    return FrameRecord(index, t0, t1, alt, model, type(exc).__name__, nan3, truth, math.nan,
                       math.nan, bool(np.linalg.norm(truth) < EXCLUDE_SPEED), 0, math.nan,
                       False, message=str(exc))


def _record(index, t0, t1, alt, model, est, truth) -> FrameRecord:
    v = est.velocity_
    speed = float(np.linalg.norm(truth))
    rel = relative_velocity_error(v, truth) if speed > 0 else math.inf
    slope = est.slope_ if est.slope_ is not None else (math.nan, math.nan)
    e = est.estimate_
    return FrameRecord(index, t0, t1, alt, model, "ok", tuple(map(float, v)), truth, rel,
                       absolute_velocity_error(v, truth), speed < EXCLUDE_SPEED,
                       int(e.n_features), float(e.residual_rms), bool(e.condition_ok),
                       tuple(map(float, slope)))


def run_pipeline(cfg: ScenarioConfig, *, source=None, cache: Optional[dict] = None,
                 progress=None) -> RunReport:
    """Render (or load) frames, track, invert and score every frame pair.

    Errors inside a pair become a failed :class:`FrameRecord` instead of
    aborting the run.  The slope model is warm-started from the previous
    successful pair (the first pair starts from the planar solution).
    """
    src = source or SimulatedSource(cfg, cache)
    traj, K = src.trajectory, src.K
    frames: list[FrameRecord] = []
    timings: list[float] = []
    warm = None
    pyr_cache: tuple[float, object] | None = None
    for i, (t0, t1) in enumerate(src.pair_times()):
        mid = traj.sample(0.5 * (t0 + t1))
        truth = tuple(map(float, mid.camera_velocity))
        alt = traj.altitude(mid.t)
        model = cfg.model
        try:
            img0, img1 = src.image(t0), src.image(t1)
            a0, w0, r0 = src.sensors(t0)
            a1, w1, r1 = src.sensors(t1)
            att, w, rho = 0.5 * (a0 + a1), 0.5 * (w0 + w1), 0.5 * (r0 + r1)
            model = _choose_model(cfg, traj, att, rho)
            tick = time.perf_counter()
            prev_pyr = pyr_cache[1] if pyr_cache and pyr_cache[0] == t0 else None
            next_pyr = build_pyramid(img1, cfg.lk.pyramid_levels)
            pyr_cache = (t1, next_pyr)
            ff = estimate_flow(img0, img1, t1 - t0, cfg.lk, K, prev_pyr=prev_pyr,
                               next_pyr=next_pyr, midpoint=True)
            init = warm
            if model == "slope" and init is None:
                lin = invert_linear(ff, w, PlanarFixedModel(attitude_to_plane_normal(att), rho), K)
                init = np.r_[lin.velocity, 0.0, 0.0]
            est = MotionFieldRegressor(K, model=model, radius=traj.radius).fit(
                ff.points, ff.flows, rates=w, rho=rho,
                normal=_model_normal(model, att, rho, traj.radius), init=init)
            timings.append(time.perf_counter() - tick)
            if model == "slope":
                warm = np.r_[est.velocity_, est.slope_]
            frames.append(_record(i, t0, t1, alt, model, est, truth))
        except FlowNavError as exc:
            frames.append(_failure(i, t0, t1, alt, model, truth, exc))
        if progress is not None:
            progress(frames[-1])
    return RunReport(cfg.scenario, to_mapping(cfg), frames, timings)


def oracle_points(K: CameraIntrinsics, n: int = 8, extent: float = 0.8) -> np.ndarray:
    """An ``n x n`` grid of principal-point-relative pixels over the central image."""
    xs = np.linspace(-0.5 * extent * K.width, 0.5 * extent * K.width, n)
    ys = np.linspace(-0.5 * extent * K.height, 0.5 * extent * K.height, n)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def oracle_surface(spec: TerrainSpec) -> TerrainSpec:
    """Unperturbed surface at the landing-site level.

    Planes are shifted along their normal by the explicit crater/mound relief
    at the surface origin, so descents into a crater or onto a peak stay above
    the oracle plane.  Spheres keep their base radius.
    """
    flat = spec.flat()
    if spec.kind == "sphere":
        return flat
    features = replace(spec, roughness=0.0, octaves=0, crater_probability=0.0, crater_layers=0,
                       pad=None)
    h = float(Terrain(features).height(0.0, 0.0)[0][0])
    origin = np.asarray(spec.origin, float) + h * np.asarray(spec.normal, float) / np.linalg.norm(
        spec.normal)
    return replace(flat, origin=tuple(map(float, origin)))


def run_oracle(cfg: ScenarioConfig, n_points: int = 8) -> RunReport:
    """Inversion-only run: exact motion field over the unperturbed base surface.

    Flow comes from ray-cast depth on :func:`oracle_surface` at each pair
    midpoint, with the exact state, so any residual error is the inversion's.
    Plane scenarios use the true base-plane normal; sphere scenarios use the
    spherical model throughout because it is the exact base geometry.
    """
    traj = cfg.trajectory()
    base = Terrain(oracle_surface(traj.terrain))
    K = cfg.intrinsics
    pts = oracle_points(K, n_points)
    src = SimulatedSource(cfg)
    frames = []
    warm = None
    for i, (t0, t1) in enumerate(src.pair_times()):
        s = traj.sample(0.5 * (t0 + t1))
        truth = tuple(map(float, s.camera_velocity))
        alt = traj.altitude(s.t)
        model = cfg.model if cfg.model != "auto" else ("planar" if traj.kind == "plane"
                                                        else "sphere")
        try:
            pose = s.pose
            ff = ground_truth_flow(base, pose, s.camera_velocity, s.rates, pts, K)
            rho = raycast_depth(base, pose, np.zeros(2), K)
            if model == "planar" and traj.kind == "plane":
                normal = -(pose.rotation.T @ base.up(pose.position))
            else:
                normal = _model_normal(model, s.attitude, rho, traj.radius)
            init = warm if warm is not None else (np.zeros(5) if model == "slope" else None)
            est = MotionFieldRegressor(K, model=model, radius=traj.radius).fit(
                ff.points, ff.flows, rates=s.rates, rho=rho, normal=normal, init=init)
            if model == "slope":
                warm = np.r_[est.velocity_, est.slope_]
            frames.append(_record(i, t0, t1, alt, model, est, truth))
        except FlowNavError as exc:
            frames.append(_failure(i, t0, t1, alt, model, truth, exc))
    return RunReport(cfg.scenario, to_mapping(cfg), frames)


@dataclass(frozen=True)
class SweepConfig:
    base: ScenarioConfig
    axis: str
    values: tuple

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise InvalidScenario(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise InvalidScenario("sweep needs at least one value")

    def configs(self) -> list[ScenarioConfig]:
        base = self.base
        if self.axis == "frame_rate" and base.pairs and base.pair_span is None:
            # shared anchors: every rate gets the same pair start times
            base = replace(base, pair_span=max(1.0 / float(v) for v in self.values))
        return [base.with_value(self.axis, v) for v in self.values]


def run_sweep(sw: SweepConfig, progress=None) -> dict:
    """One pipeline run per swept value, in order, sharing rendered frames."""
    cache: dict = {}
    out = {}
    for value, cfg in zip(sw.values, sw.configs()):
        out[value] = run_pipeline(cfg, cache=cache)
        if progress is not None:
            progress(value, out[value])
    return out


def simulate(cfg: ScenarioConfig, outdir) -> Path:
    """Write frames (PGM), sensor telemetry (CSV) and the resolved config."""
    out = Path(outdir)
    (out / FRAME_DIR).mkdir(parents=True, exist_ok=True)
    src = SimulatedSource(replace(cfg, pairs=0))
    times = [src.pair_times()[0][0]] + [b for _, b in src.pair_times()]
    records = []
    for i, t in enumerate(times):
        write_pgm(out / FRAME_DIR / f"frame_{i:05d}.pgm", src.image(t))
        s = src.trajectory.sample(t)
        att, w, rho = src.sensors(t)
        records.append(TelemetryRecord(t, *s.position, *s.velocity, *att, *w, rho))
    write_telemetry(out / TELEMETRY_FILE, records)
    write_config(out / CONFIG_FILE, to_mapping(replace(cfg, pairs=0)))
    return out


def estimate_directory(directory, model: str = "auto") -> RunReport:
    src = DirectorySource(directory)
    cfg = replace(src.cfg, model=model)
    src.cfg = cfg
    return run_pipeline(cfg, source=src)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_frames_csv(report: RunReport, path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(FRAME_COLUMNS)
            for r in report.frames:
                wr.writerow([_fmt(x) for x in (
                    r.index, r.t0, r.t1, r.t_mid, r.altitude, r.model, r.status, *r.estimate,
                    *r.truth, r.rel_error, r.abs_error, r.excluded, r.n_features,
                    r.residual_rms, r.condition_ok, *r.slope, r.message)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_frames_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def summary_row(report: RunReport, label: Optional[str] = None) -> list[str]:
    group, name = _GROUPS.get(report.scenario, ("Landing", report.scenario.capitalize()))
    s = report.summary
    return [group, label or name] + [_fmt(s[k]) for k in SUMMARY_COLUMNS[2:]]


def write_summary_csv(rows: Iterable[list[str]], path, extra: Sequence[str] = ()) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow([*extra, *SUMMARY_COLUMNS])
            for row in rows:
                wr.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _polyline(xs, ys, x0, x1, y0, y1, box) -> str:
    left, top, w, h = box
    pts = []
    for x, y in zip(xs, ys):
        if not (math.isfinite(x) and math.isfinite(y)):
            continue
        px = left + (x - x0) / (x1 - x0) * w if x1 > x0 else left
        py = top + h - (y - y0) / (y1 - y0) * h if y1 > y0 else top + h / 2
        pts.append(f"{px:.2f},{py:.2f}")
    return " ".join(pts)


def velocity_svg(report: RunReport, width: int = 720, panel_height: int = 150) -> str:
    """Estimated vs true camera velocity components and relative error against time."""
    t = report.column("t_mid") if report.frames else np.zeros(0)
    est = np.array([f.estimate for f in report.frames]).reshape(-1, 3)
    tru = np.array([f.truth for f in report.frames]).reshape(-1, 3)
    rel = report.column("rel_error") if report.frames else np.zeros(0)
    margin_l, margin_t, gap = 70, 30, 40
    pw = width - margin_l - 20
    height = margin_t + 4 * (panel_height + gap)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<text x="{margin_l}" y="18" font-size="13">'
           f'{escape(report.scenario)}: estimated (red) vs true (black)</text>']
    finite_t = t[np.isfinite(t)] if t.size else t
    x0, x1 = (float(finite_t.min()), float(finite_t.max())) if finite_t.size else (0.0, 1.0)
    panels = [("v_x (m/s)", est[:, 0], tru[:, 0]), ("v_y (m/s)", est[:, 1], tru[:, 1]),
              ("v_z (m/s)", est[:, 2], tru[:, 2]), ("relative error", rel, None)]
    for k, (label, a, b) in enumerate(panels):
        top = margin_t + k * (panel_height + gap)
        box = (margin_l, top, pw, panel_height)
        vals = np.concatenate([a, b if b is not None else np.zeros(0)])
        vals = vals[np.isfinite(vals)]
        y0, y1 = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
        if y1 - y0 < 1e-12:
            y0, y1 = y0 - 0.5, y1 + 0.5
        out.append(f'<rect x="{margin_l}" y="{top}" width="{pw}" height="{panel_height}" '
                   'fill="none" stroke="#888"/>')
        out.append(f'<text x="8" y="{top + panel_height / 2:.1f}">{escape(label)}</text>')
        out.append(f'<text x="{margin_l - 4}" y="{top + 10}" text-anchor="end">{y1:.4g}</text>')
        out.append(f'<text x="{margin_l - 4}" y="{top + panel_height}" '
                   f'text-anchor="end">{y0:.4g}</text>')
        if b is not None:
            out.append(f'<polyline fill="none" stroke="black" stroke-width="1.2" '
                       f'points="{_polyline(t, b, x0, x1, y0, y1, box)}"/>')
        out.append(f'<polyline fill="none" stroke="#c0392b" stroke-width="1" '
                   f'points="{_polyline(t, a, x0, x1, y0, y1, box)}"/>')
    bottom = margin_t + 4 * (panel_height + gap) - gap + 16
    out.append(f'<text x="{margin_l}" y="{bottom}">t = {x0:.4g} s</text>')
    out.append(f'<text x="{margin_l + pw}" y="{bottom}" text-anchor="end">t = {x1:.4g} s</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_report(report: RunReport, outdir) -> dict[str, Path]:
    """Per-frame CSV, Table-style aggregate CSV and an SVG velocity plot."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    paths = {"frames": write_frames_csv(report, out / "frames.csv"),
             "summary": write_summary_csv([summary_row(report)], out / "summary.csv"),
             "plot": out / "velocity.svg"}
    try:
        paths["plot"].write_text(velocity_svg(report))
    except OSError as exc:
        raise OSError(f"cannot write {paths['plot']}: {exc}") from exc
    return paths


def export_sweep(sw: SweepConfig, reports: Mapping, outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value, rep in reports.items():
        export_report(rep, out / f"{sw.axis}={value}")
        rows.append([_fmt(value), *summary_row(rep)])
    return write_summary_csv(rows, out / "sweep.csv", extra=(sw.axis,))
