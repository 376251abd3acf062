from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import random_unit_normals
from hypothesis import given
from hypothesis import strategies as st

from flownav.depth import PlanarFixedModel, PlanarSlopeModel, SphericalModel
from flownav.exceptions import InsufficientFeatures, ZeroTruthVelocity
from flownav.geometry import CameraIntrinsics, pixel_to_normalized
from flownav.motion import (FlowObservation, absolute_velocity_error, interaction_matrices,
                            invert_linear, invert_slope, predict_flow, relative_velocity_error,
                            rotational_flow, slope_residuals)

finite = st.floats(-50, 50, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)
rates = st.tuples(*[st.floats(-0.2, 0.2)] * 3)
pix = st.tuples(st.floats(-500, 500), st.floats(-500, 500))


def depth_at(model, pts, K):
    n = pixel_to_normalized(pts, K)
    return model.inverse_depth(n[:, 0], n[:, 1])


def eq1(p, d, v, w, K):
    """Scalar flow equation, written out term by term."""
    x, y = p
    vx, vy, vz = v
    pp, q, r = w
    u = (x * vz - K.fx * vx) * d - K.fx * q + r * y + pp * x * y / K.fy - q * x * x / K.fx
    vv = (y * vz - K.fy * vy) * d + K.fy * pp - r * x - q * x * y / K.fx + pp * y * y / K.fy
    return np.array([u, vv])


class TestInteraction:
    def test_principal_point(self, K1000):
        lt, lw = interaction_matrices(np.array([0.0, 0.0]), K1000)
        assert np.array_equal(lt, [[-1000, 0, 0], [0, -1000, 0]])
        assert np.array_equal(lw, [[0, -1000, 0], [1000, 0, 0]])

    def test_example_row(self, K1000):
        _, lw = interaction_matrices(np.array([100.0, 200.0]), K1000)
        assert np.allclose(lw[0], [20.0, -1010.0, 200.0])

    @given(pix, st.floats(1e-5, 1e-1), vec3, rates)
    def test_matrix_form_equals_scalar_form(self, p, d, v, w):
        K = CameraIntrinsics(800.0, 900.0, 511.5, 511.5, 1024, 1024)
        lt, lw = interaction_matrices(np.asarray(p), K)
        a = d * lt @ np.asarray(v) + lw @ np.asarray(w)
        b = eq1(p, d, v, w, K)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
        assert np.allclose(predict_flow(np.asarray(p), d, v, w, K), b, rtol=1e-10, atol=1e-10)


class TestPredict:
    def test_static(self, K1000):
        assert np.array_equal(predict_flow(np.array([12.0, 3.0]), 1e-3, (0, 0, 0), (0, 0, 0),
                                           K1000), [0.0, 0.0])

    def test_nadir_descent_diverges(self, K1000):
        f = predict_flow(np.array([100.0, 0.0]), 1e-3, (0, 0, 10), (0, 0, 0), K1000)
        assert np.allclose(f, [1.0, 0.0])

    def test_pure_roll_curls(self, K1000):
        f = predict_flow(np.array([100.0, 200.0]), 1e-3, (0, 0, 0), (0, 0, 0.1), K1000)
        assert np.allclose(f, [20.0, -10.0])

    @given(vec3, rates, st.tuples(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4)),
           st.floats(5.0, 500.0))
    def test_matches_reprojected_point_motion(self, v, w, n, Z):
        """Static point in camera coordinates evolves as dP/dt = -v - w x P."""
        K = CameraIntrinsics(700.0, 700.0, 511.5, 511.5, 1024, 1024)
        P = np.array([n[0] * Z, n[1] * Z, Z])
        v, w = np.asarray(v), np.asarray(w)

        def proj(P):
            return np.array([K.fx * P[0] / P[2], K.fy * P[1] / P[2]])

        h = 1e-6
        dP = -v - np.cross(w, P)
        fd = (proj(P + h * dP) - proj(P - h * dP)) / (2 * h)
        f = predict_flow(proj(P), 1.0 / Z, v, w, K)
        assert np.allclose(f, fd, rtol=1e-5, atol=1e-5)


def make_obs(K, model, v, w, n=50, seed=0, spread=400.0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-spread, spread, size=(n, 2))
    d = depth_at(model, pts, K)
    return pts, predict_flow(pts, d, v, w, K)


class TestInvertLinear:
    def test_zero_flow(self, K1000):
        pts = np.array([[10.0, 20.0], [-100.0, 50.0], [300.0, -200.0]])
        est = invert_linear((pts, np.zeros_like(pts)), (0, 0, 0),
                            PlanarFixedModel((0, 0, 1), 100.0), K1000)
        assert np.allclose(est.velocity, 0.0, atol=1e-15)
        assert est.residual_rms == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("model", [
        PlanarFixedModel((0.1, -0.2, math.sqrt(0.95)), 800.0),
        SphericalModel((0.05, 0.1, math.sqrt(1 - 0.0125)), 3e5, 1_737_400.0),
    ])
    def test_round_trip(self, K1000, model):
        v = np.array([3.0, -2.0, 12.0])
        obs = make_obs(K1000, model, v, (0.01, -0.02, 0.005))
        est = invert_linear(obs, (0.01, -0.02, 0.005), model, K1000)
        assert relative_velocity_error(est.velocity, v) < 1e-9
        assert est.n_features == 50 and est.condition_ok

    def test_two_points_suffice(self, K1000):
        model = PlanarFixedModel((0, 0, 1), 500.0)
        v = np.array([1.0, 2.0, 3.0])
        pts = np.array([[100.0, -40.0], [-250.0, 300.0]])
        flows = predict_flow(pts, depth_at(model, pts, K1000), v, (0, 0, 0), K1000)
        est = invert_linear((pts, flows), (0, 0, 0), model, K1000)
        assert relative_velocity_error(est.velocity, v) < 1e-9

    def test_flow_observation_input(self, K1000):
        model = PlanarFixedModel((0, 0, 1), 500.0)
        pts, flows = make_obs(K1000, model, (1, 1, 1), (0, 0, 0), n=5)
        obs = [FlowObservation(tuple(p), tuple(f)) for p, f in zip(pts, flows)]
        est = invert_linear(obs, (0, 0, 0), model, K1000)
        assert np.allclose(est.velocity, 1.0)

    @pytest.mark.parametrize("pts", [np.zeros((1, 2)), np.array([[5.0, 5.0], [5.0, 5.0]])])
    def test_insufficient(self, K1000, pts):
        with pytest.raises(InsufficientFeatures):
            invert_linear((pts, np.zeros_like(pts)), (0, 0, 0), PlanarFixedModel((0, 0, 1), 1.0),
                          K1000)

    def test_permutation_invariant(self, K1000):
        model = PlanarFixedModel((0.2, 0.0, math.sqrt(0.96)), 1500.0)
        pts, flows = make_obs(K1000, model, (5, -1, 20), (0, 0, 0), n=30)
        flows = flows + np.random.default_rng(1).normal(scale=0.5, size=flows.shape)
        a = invert_linear((pts, flows), (0, 0, 0), model, K1000).velocity
        perm = np.random.default_rng(2).permutation(30)
        b = invert_linear((pts[perm], flows[perm]), (0, 0, 0), model, K1000).velocity
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    @given(rates)
    def test_rotation_compensation(self, w):
        K = CameraIntrinsics(1000.0, 1000.0, 511.5, 511.5, 1024, 1024)
        model = PlanarFixedModel((0, 0, 1), 900.0)
        pts, flows = make_obs(K, model, (2, 3, -4), (0, 0, 0), n=20)
        flows = flows + np.random.default_rng(3).normal(scale=0.3, size=flows.shape)
        a = invert_linear((pts, flows), (0, 0, 0), model, K).velocity
        b = invert_linear((pts, flows + rotational_flow(pts, w, K)), w, model, K).velocity
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10)

    def test_random_round_trip(self, K1000):
        rng = np.random.default_rng(4)
        for k in random_unit_normals(rng, 50, min_gamma=0.6):
            for model in (PlanarFixedModel(k, float(rng.uniform(50, 5e4))),
                          SphericalModel(k, float(rng.uniform(1e3, 4e5)), 1_737_400.0)):
                v = rng.normal(scale=100.0, size=3)
                w = rng.normal(scale=0.01, size=3)
                n = int(rng.integers(3, 40))
                obs = make_obs(K1000, model, v, w, n=n, seed=int(rng.integers(1 << 30)))
                est = invert_linear(obs, w, model, K1000)
                assert relative_velocity_error(est.velocity, v) < 1e-9

    def test_missed_rays_dropped(self, K1000):
        model = SphericalModel((0.0, 0.0, 1.0), 2e5, 2e5)
        pts = np.array([[0.0, 0.0], [100.0, 50.0], [-80.0, 30.0], [900.0, 900.0]])
        ok = np.isfinite(depth_at(model, pts, K1000))
        assert ok.tolist() == [True, True, True, False]
        flows = np.zeros_like(pts)
        flows[ok] = predict_flow(pts[ok], depth_at(model, pts[ok], K1000), (1, 0, 2), (0, 0, 0),
                                 K1000)
        est = invert_linear((pts, flows), (0, 0, 0), model, K1000)
        assert est.n_dropped == 1 and est.n_features == 3
        assert np.allclose(est.velocity, (1, 0, 2))

    def test_condition_flag(self, K1000):
        model = PlanarFixedModel((0, 0, 1), 100.0)
        obs = make_obs(K1000, model, (1, 1, 1), (0, 0, 0))
        est = invert_linear(obs, (0, 0, 0), model, K1000, condition_threshold=1.0)
        assert not est.condition_ok and est.condition_number > 1.0


class TestInvertSlope:
    def test_recovers_slope_from_cold_start(self, K1000):
        truth = PlanarSlopeModel(0.3, 0.1, 400.0)
        v = np.array([1.0, 0.0, 5.0])
        obs = make_obs(K1000, truth, v, (0.002, 0.001, -0.003), n=60)
        est = invert_slope(obs, (0.002, 0.001, -0.003), 400.0, K1000, init=np.zeros(5))
        assert est.converged
        assert np.allclose(est.velocity, v, rtol=1e-6, atol=1e-6)
        assert np.allclose(est.slope, (0.3, 0.1), rtol=1e-6)

    def test_zero_slope_matches_linear(self, K1000):
        model = PlanarFixedModel((0, 0, 1), 300.0)
        v = np.array([-2.0, 4.0, 9.0])
        obs = make_obs(K1000, model, v, (0, 0, 0))
        lin = invert_linear(obs, (0, 0, 0), model, K1000)
        sl = invert_slope(obs, (0, 0, 0), 300.0, K1000)
        assert np.allclose(sl.velocity, lin.velocity, rtol=1e-6, atol=1e-6)
        assert np.allclose(sl.slope, 0.0, atol=1e-6)

    def test_pinned_slope_reproduces_linear(self, K1000):
        truth = PlanarSlopeModel(0.2, -0.1, 300.0)
        obs = make_obs(K1000, truth, (1.0, 2.0, 8.0), (0, 0, 0))
        flows = obs[1] + np.random.default_rng(5).normal(scale=0.2, size=obs[1].shape)
        lin = invert_linear((obs[0], flows), (0, 0, 0), PlanarFixedModel((0, 0, 1), 300.0), K1000)
        sl = invert_slope((obs[0], flows), (0, 0, 0), 300.0, K1000, init=(0, 0, 0, 0.3, 0.1),
                          max_slope=0.0)
        assert sl.slope == (0.0, 0.0)
        assert np.allclose(sl.velocity, lin.velocity, rtol=1e-6, atol=1e-6)

    def test_two_observations_insufficient(self, K1000):
        pts = np.array([[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(InsufficientFeatures):
            invert_slope((pts, np.zeros_like(pts)), (0, 0, 0), 10.0, K1000)

    def test_slope_stays_in_bound(self, K1000):
        truth = PlanarSlopeModel(0.5, 0.0, 300.0)
        obs = make_obs(K1000, truth, (1.0, 0.0, 3.0), (0, 0, 0))
        est = invert_slope(obs, (0, 0, 0), 300.0, K1000, max_slope=0.2)
        assert math.hypot(*est.slope) <= 0.2 + 1e-12

    def test_jacobian_matches_finite_differences(self, K1000):
        rng = np.random.default_rng(6)
        pts = rng.uniform(-400, 400, size=(25, 2))
        flows = rng.normal(scale=5.0, size=(25, 2))
        w = (0.01, -0.02, 0.03)
        for _ in range(100):
            theta = np.r_[rng.normal(scale=10.0, size=3), rng.uniform(-0.5, 0.5, size=2)]
            _, jac = slope_residuals(theta, pts, flows, w, 500.0, K1000)
            fd = np.empty_like(jac)
            for k in range(5):
                h = 1e-6 * max(1.0, abs(theta[k]))
                tp, tm = theta.copy(), theta.copy()
                tp[k] += h
                tm[k] -= h
                fd[:, k] = (slope_residuals(tp, pts, flows, w, 500.0, K1000)[0]
                            - slope_residuals(tm, pts, flows, w, 500.0, K1000)[0]) / (2 * h)
            scale = np.max(np.abs(fd), axis=0) + 1e-12
            assert np.all(np.max(np.abs(jac - fd), axis=0) / scale < 1e-5)


class TestErrors:
    def test_relative(self):
        assert relative_velocity_error((1, 2, 3), (1, 2, 3)) == 0.0
        assert relative_velocity_error((0, 0, 0), (4, -1, 2)) == 1.0
        assert relative_velocity_error((1.03, 0, 0), (1, 0, 0)) == pytest.approx(0.03)

    def test_relative_undefined_at_rest(self):
        with pytest.raises(ZeroTruthVelocity):
            relative_velocity_error((1, 0, 0), (0, 0, 0))

    def test_absolute(self):
        assert absolute_velocity_error((1, 1, 1), (1, 1, 1)) == 0.0
        assert absolute_velocity_error((4, 5, 1), (1, 1, 1)) == 5.0

    @given(vec3, vec3)
    def test_absolute_is_euclidean(self, a, b):
        ref = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
        assert absolute_velocity_error(a, b) == pytest.approx(ref, rel=1e-12, abs=1e-12)
