"""Procedural terrain: base plane or sphere plus a seeded relief field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from ..exceptions import InvalidScenario
from ..geometry import MOON_RADIUS
from . import _kernels as K_


class Crater(NamedTuple):
    """Bowl centred at surface coordinates ``(u, v)``; ``depth`` below the base surface."""

    u: float
    v: float
    radius: float
    depth: float


class Mound(NamedTuple):
    u: float
    v: float
    radius: float
    height: float


@dataclass(frozen=True)
class TerrainSpec:
    """Terrain description; every field has a sensible default.

    ``kind`` is ``"plane"`` (world z up, base plane through ``origin`` with
    normal ``normal``) or ``"sphere"`` (centred at the world origin).  Relief
    is a fractal value-noise heightfield whose octave amplitudes are
    ``roughness * wavelength`` plus several layers of randomly placed craters
    and any explicit craters/mounds.  Surface coordinates ``(u, v)`` are
    in-plane coordinates for planes and ``(R lon, R lat)`` for spheres.
    """

    kind: str = "plane"
    radius: float = MOON_RADIUS
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    roughness: float = 0.02
    max_wavelength: float = 4000.0
    octaves: int = 10
    crater_probability: float = 0.25
    crater_layers: int = 3
    crater_cell: float = 2000.0
    crater_depth_ratio: float = 0.12
    craters: tuple[Crater, ...] = ()
    mounds: tuple[Mound, ...] = ()
    pad: tuple[float, float, float] | None = None
    albedo_contrast: float = 0.35
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("plane", "sphere"):
            raise InvalidScenario(f"unknown terrain kind {self.kind!r}")
        if not self.radius > 0:
            raise InvalidScenario("sphere radius must be positive")
        if self.roughness < 0 or self.albedo_contrast < 0 or self.crater_probability < 0:
            raise InvalidScenario("relief and albedo amplitudes must be non-negative")
        if not 0 <= self.octaves <= 32:
            raise InvalidScenario("octaves must lie in [0, 32]")
        n = np.asarray(self.normal, float)
        if not np.linalg.norm(n) > 0:
            raise InvalidScenario("plane normal must be non-zero")
        object.__setattr__(self, "craters", tuple(Crater(*c) for c in self.craters))
        object.__setattr__(self, "mounds", tuple(Mound(*m) for m in self.mounds))

    def flat(self) -> "TerrainSpec":
        """Same base surface with every perturbation removed."""
        return TerrainSpec(kind=self.kind, radius=self.radius, origin=self.origin,
                           normal=self.normal, roughness=0.0, octaves=0,
                           crater_probability=0.0, crater_layers=0,
                           albedo_contrast=self.albedo_contrast, seed=self.seed)


def _plane_axes(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - n * (ref @ n)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return n, e1, e2


@dataclass(frozen=True)
class Terrain:
    """Compiled terrain ready for ray casting and rendering."""

    spec: TerrainSpec = field(default_factory=TerrainSpec)

    @cached_property
    def tables(self) -> tuple[np.ndarray, ...]:
        s = self.spec
        rng = np.random.default_rng(np.random.SeedSequence([s.seed, 0x7E22A1]))
        perm = rng.permutation(K_.TABLE).astype(np.int64)
        perm = np.concatenate([perm, perm])
        val = rng.random(K_.TABLE)
        offsets = rng.random((64, 2)) * K_.TABLE
        tp = np.zeros(K_.N_PARAMS)
        tp[K_.KIND] = 0.0 if s.kind == "plane" else 1.0
        tp[K_.RADIUS] = s.radius
        n, e1, e2 = _plane_axes(s.normal)
        tp[K_.ORIGIN:K_.ORIGIN + 3] = s.origin
        tp[K_.NORMAL:K_.NORMAL + 3] = n
        tp[K_.E1:K_.E1 + 3] = e1
        tp[K_.E2:K_.E2 + 3] = e2
        tp[K_.ROUGHNESS] = s.roughness
        tp[K_.MAX_WAVELENGTH] = s.max_wavelength
        tp[K_.N_OCTAVES] = s.octaves
        tp[K_.ALBEDO_CONTRAST] = s.albedo_contrast
        tp[K_.CRATER_PROB] = s.crater_probability
        tp[K_.CRATER_LAYERS] = s.crater_layers
        tp[K_.CRATER_CELL] = s.crater_cell
        tp[K_.CRATER_DEPTH_RATIO] = s.crater_depth_ratio
        if s.pad is not None:
            tp[K_.PAD_U:K_.PAD_RADIUS + 1] = s.pad
        tp[K_.H_MIN], tp[K_.H_MAX] = self._height_bounds()
        craters = np.array(s.craters, float).reshape(-1, 4)
        mounds = np.array(s.mounds, float).reshape(-1, 4)
        return tp, perm, val, offsets, craters, mounds

    def _height_bounds(self) -> tuple[float, float]:
        # conservative envelope of every relief term, padded by a metre
        s = self.spec
        amp = sum(s.roughness * s.max_wavelength * 0.5**k for k in range(s.octaves))
        lo, hi = -0.5 * amp, 0.5 * amp
        if s.crater_layers > 0 and s.crater_probability > 0:
            # overlapping craters from several layers can stack
            deepest = sum(s.crater_depth_ratio * 2 * 0.32 * s.crater_cell * 0.25**k
                          for k in range(s.crater_layers))
            lo -= 4.0 * deepest
            hi += 4.0 * 0.06 * deepest
        for c in s.craters:
            lo -= c.depth
            hi += 0.06 * c.depth
        for m in s.mounds:
            hi += max(m.height, 0.0)
            lo += min(m.height, 0.0)
        return lo - 1.0, hi + 1.0

    @property
    def is_sphere(self) -> bool:
        return self.spec.kind == "sphere"

    def height(self, u, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Relief height and its exact gradient at surface coordinates."""
        u = np.atleast_1d(np.asarray(u, float))
        v = np.atleast_1d(np.asarray(v, float))
        u, v = np.broadcast_arrays(u, v)
        out = K_.height_many(np.ascontiguousarray(u.ravel()), np.ascontiguousarray(v.ravel()),
                             *self.tables)
        return tuple(out[:, k].reshape(u.shape) for k in range(3))

    def surface_coords(self, points) -> np.ndarray:
        """World points to ``(u, v, s)`` rows, s being height above the base surface."""
        p = np.atleast_2d(np.asarray(points, float))
        tp = self.tables[0]
        if not self.is_sphere:
            q = p - tp[K_.ORIGIN:K_.ORIGIN + 3]
            return np.column_stack([q @ tp[K_.E1:K_.E1 + 3], q @ tp[K_.E2:K_.E2 + 3],
                                    q @ tp[K_.NORMAL:K_.NORMAL + 3]])
        r = np.linalg.norm(p, axis=1)
        R = self.spec.radius
        return np.column_stack([R * np.arctan2(p[:, 1], p[:, 0]),
                                R * np.arctan2(p[:, 2], np.hypot(p[:, 0], p[:, 1])), r - R])

    def up(self, point) -> np.ndarray:
        """Base-surface up direction at a world point."""
        if self.is_sphere:
            p = np.asarray(point, float)
            return p / np.linalg.norm(p)
        return self.tables[0][K_.NORMAL:K_.NORMAL + 3].copy()

    def altitude(self, point) -> float:
        """Height of a world point above the base surface."""
        return float(self.surface_coords(point)[0, 2])

    def elevation(self, point) -> float:
        """Terrain height below a world point (relief at its surface coordinates)."""
        u, v, _ = self.surface_coords(point)[0]
        return float(self.height(u, v)[0][0])

    def raycast(self, origin, directions) -> np.ndarray:
        """Distances along unit world directions to the first surface hit, NaN on a miss."""
        d = np.atleast_2d(np.asarray(directions, float))
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        return K_.raycast_many(np.asarray(origin, float), np.ascontiguousarray(d), *self.tables)


def landing_site_elevation(final_altitude: float, clearance: float = 100.0) -> float:
    return final_altitude - clearance


def incline_normal(tilt_deg: float, azimuth_deg: float = 0.0) -> tuple[float, float, float]:
    """Upward normal of a plane rising toward ``azimuth_deg`` (from +x toward +y)."""
    t = math.radians(tilt_deg)
    a = math.radians(azimuth_deg)
    return (-math.sin(t) * math.cos(a), -math.sin(t) * math.sin(a), math.cos(t))
