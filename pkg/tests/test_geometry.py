from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flownav.exceptions import DomainError, NoIntersection
from flownav.geometry import (MOON_RADIUS, CameraIntrinsics, attitude_to_plane_normal,
                              attitude_to_sphere_geometry, normalized_to_pixel,
                              pixel_to_normalized, pixel_to_raster, raster_to_pixel,
                              rotation_body_to_camera, rotation_body_to_camera_rate)

angles = st.floats(-math.pi, math.pi, allow_nan=False)
attitudes = st.tuples(angles, angles, angles)


def sphere_oracle(att, rho, R):
    """Camera-frame ray/sphere construction: centre on the body-down axis, hit at range rho."""
    down = rotation_body_to_camera(att)[:, 2]
    cos_nu = down[2]
    sin2 = 1.0 - cos_nu**2
    centre_dist = rho * cos_nu + math.sqrt(R * R - rho * rho * sin2)
    centre = centre_dist * down
    normal = (centre - np.array([0.0, 0.0, rho])) / R
    return centre_dist - R, normal


class TestIntrinsics:
    def test_from_fov_centres_principal_point(self):
        K = CameraIntrinsics.from_fov(1024, fov_deg=45.0)
        assert K.cx == K.cy == 511.5
        assert K.fx == pytest.approx(512.0 / math.tan(math.radians(22.5)))

    @pytest.mark.parametrize("kw", [dict(fx=0.0), dict(fy=-1.0), dict(cx=1024.0), dict(cy=-0.1)])
    def test_invalid(self, kw):
        args = dict(fx=1000.0, fy=1000.0, cx=511.5, cy=511.5, width=1024, height=1024)
        args.update(kw)
        with pytest.raises(DomainError):
            CameraIntrinsics(**args)

    def test_scaled_keeps_field_of_view(self):
        K = CameraIntrinsics.from_fov(1024)
        assert K.scaled(256).fx == pytest.approx(CameraIntrinsics.from_fov(256).fx)


class TestConversions:
    def test_examples(self, K1000):
        assert np.allclose(pixel_to_normalized((0.0, 0.0), K1000), (0.0, 0.0))
        assert np.allclose(pixel_to_normalized((100.0, -50.0), K1000), (0.1, -0.05))
        K = CameraIntrinsics(512.0, 512.0, 511.5, 511.5, 1024, 1024)
        assert np.allclose(pixel_to_normalized((512.0, 512.0), K), (1.0, 1.0))
        assert np.allclose(normalized_to_pixel((0.1, -0.05), K1000), (100.0, -50.0))

    @given(st.floats(-1024, 1024), st.floats(-1024, 1024),
           st.floats(100, 5000), st.floats(100, 5000))
    def test_round_trip(self, x, y, fx, fy):
        K = CameraIntrinsics(fx, fy, 10.0, 10.0, 20, 20)
        back = normalized_to_pixel(pixel_to_normalized((x, y), K), K)
        assert np.allclose(back, (x, y), rtol=0, atol=1e-12 * max(1.0, abs(x), abs(y)))

    def test_raster_round_trip(self, K512):
        rc = np.array([[0.0, 0.0], [511.0, 511.0], [255.5, 255.5]])
        p = raster_to_pixel(rc, K512)
        assert np.allclose(p[2], 0.0)
        assert np.allclose(pixel_to_raster(p, K512), rc)


class TestRotation:
    def test_identity(self):
        assert np.array_equal(rotation_body_to_camera((0, 0, 0)), np.eye(3))

    def test_yaw_quarter_turn_maps_x_to_y(self):
        R = rotation_body_to_camera((0.0, 0.0, math.pi / 2))
        assert np.allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_composition_order(self):
        a = (0.3, -0.2, 0.7)
        R = rotation_body_to_camera(a)
        Rx = rotation_body_to_camera((a[0], 0, 0))
        Ry = rotation_body_to_camera((0, a[1], 0))
        Rz = rotation_body_to_camera((0, 0, a[2]))
        assert np.allclose(R, Rz @ Ry @ Rx, atol=1e-15)

    def test_proper_orthogonal_1000_random(self):
        rng = np.random.default_rng(1)
        for a in rng.uniform(-math.pi, math.pi, size=(1000, 3)):
            R = rotation_body_to_camera(a)
            assert np.allclose(R.T @ R, np.eye(3), rtol=0, atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    @given(attitudes, st.tuples(*[st.floats(-1, 1)] * 3))
    def test_rate_matches_finite_difference(self, a, da):
        h = 1e-6
        ap = np.add(a, h * np.asarray(da))
        am = np.subtract(a, h * np.asarray(da))
        fd = (rotation_body_to_camera(ap) - rotation_body_to_camera(am)) / (2 * h)
        assert np.allclose(rotation_body_to_camera_rate(a, da), fd, atol=1e-8)


class TestPlaneNormal:
    def test_nadir(self):
        assert tuple(attitude_to_plane_normal((0, 0, 0))) == (0.0, 0.0, 1.0)

    @pytest.mark.parametrize("eps", [0.05, 0.3, 1.0])
    def test_pure_pitch(self, eps):
        assert attitude_to_plane_normal((0.0, eps, 0.0)).gamma == pytest.approx(math.cos(eps),
                                                                                 abs=1e-15)

    @given(attitudes)
    def test_unit_norm(self, a):
        assert np.linalg.norm(attitude_to_plane_normal(a)) == pytest.approx(1.0, abs=1e-12)


class TestSphereGeometry:
    def test_nadir_limit(self):
        n, H = attitude_to_sphere_geometry((0, 0, 0), 12345.0, MOON_RADIUS)
        assert H == 12345.0
        assert tuple(n) == (0.0, 0.0, 1.0)

    def test_small_offset_against_ray_sphere(self):
        rho = 300e3
        n, H = attitude_to_sphere_geometry((0.01, 0.0, 0.0), rho, MOON_RADIUS)
        H_ref, n_ref = sphere_oracle((0.01, 0.0, 0.0), rho, MOON_RADIUS)
        assert H == pytest.approx(H_ref, rel=1e-6)
        assert np.allclose(n, n_ref, atol=1e-9)

    def test_1000_random_attitudes(self):
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(1000):
            a = rng.uniform(-0.6, 0.6, size=3)
            R = float(rng.choice([MOON_RADIUS, 5000.0, 1e5]))
            rho = float(rng.uniform(1e-5, 0.3) * R)
            down = rotation_body_to_camera(a)[:, 2]
            if (rho / R) * math.sqrt(max(0.0, 1 - down[2] ** 2)) >= 1.0:
                continue
            n, H = attitude_to_sphere_geometry(a, rho, R)
            H_ref, n_ref = sphere_oracle(a, rho, R)
            assert H == pytest.approx(H_ref, rel=1e-6, abs=1e-9 * R)
            assert np.allclose(n, n_ref, atol=1e-8)
            checked += 1
        assert checked > 990

    @pytest.mark.parametrize("nu", [1e-7, 5e-4, 9.99e-4, 1.001e-3, 2e-3])
    def test_continuous_across_small_angle_branch(self, nu):
        rho = 4000.0
        _, H = attitude_to_sphere_geometry((nu, 0.0, 0.0), rho, MOON_RADIUS)
        H_ref, _ = sphere_oracle((nu, 0.0, 0.0), rho, MOON_RADIUS)
        # the sine-rule quotient above 1e-3 rad carries ~eps * R / sin(nu) of rounding
        assert H == pytest.approx(H_ref, rel=1e-9)

    def test_sine_rule_domain(self):
        R = 1000.0
        with pytest.raises(NoIntersection):
            attitude_to_sphere_geometry((0.8, 0.0, 0.0), 5000.0, R)

    def test_boresight_above_horizon(self):
        with pytest.raises(NoIntersection):
            attitude_to_sphere_geometry((2.0, 0.0, 0.0), 10.0, MOON_RADIUS)

    @pytest.mark.parametrize("rho,R", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
    def test_domain(self, rho, R):
        with pytest.raises(DomainError):
            attitude_to_sphere_geometry((0, 0, 0), rho, R)
