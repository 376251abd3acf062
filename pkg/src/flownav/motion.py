"""Motion-field prediction and least-squares egomotion recovery.

Flow is expressed in pixels per second at principal-point-relative pixel
offsets; the depth models are evaluated on the matching normalised slopes.
Sign conventions follow the usual static-scene derivation: a scene point in
camera coordinates moves as ``dP/dt = -v - w x P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .depth import DepthModel, PlanarSlopeModel
from .exceptions import DomainError, InsufficientFeatures, RankDeficient, ZeroTruthVelocity
from .geometry import CameraIntrinsics, pixel_to_normalized


class FlowObservation(NamedTuple):
    point: tuple[float, float]
    flow: tuple[float, float]


@dataclass
class EgomotionEstimate:
    velocity: np.ndarray
    residual_rms: float
    n_features: int
    condition_ok: bool
    slope: Optional[tuple[float, float]] = None
    condition_number: float = 1.0
    n_dropped: int = 0
    converged: bool = True
    iterations: int = 0
    extras: dict = field(default_factory=dict)


def as_arrays(obs) -> tuple[np.ndarray, np.ndarray]:
    """Accept ``(points, flows)`` arrays or a sequence of :class:`FlowObservation`."""
    if isinstance(obs, tuple) and len(obs) == 2 and not isinstance(obs, FlowObservation):
        pts, flows = obs
    else:
        obs = list(obs)
        if not obs:
            return np.zeros((0, 2)), np.zeros((0, 2))
        pts = [o.point for o in obs]
        flows = [o.flow for o in obs]
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    flows = np.asarray(flows, dtype=float).reshape(-1, 2)
    if len(pts) != len(flows):
        raise ValueError(f"{len(pts)} points but {len(flows)} flow vectors")
    return pts, flows


def interaction_matrices(p, K: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Translational and rotational interaction matrices at pixel offsets ``p``.

    Returns arrays of shape (2, 3) for a single point or (N, 2, 3).
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    x, y = p[:, 0], p[:, 1]
    fx, fy = K.fx, K.fy
    n = len(p)
    lt = np.zeros((n, 2, 3))
    lt[:, 0, 0] = -fx
    lt[:, 0, 2] = x
    lt[:, 1, 1] = -fy
    lt[:, 1, 2] = y
    lw = np.empty((n, 2, 3))
    lw[:, 0, 0] = x * y / fy
    lw[:, 0, 1] = -(fx + x * x / fx)
    lw[:, 0, 2] = y
    lw[:, 1, 0] = fy + y * y / fy
    lw[:, 1, 1] = -x * y / fx
    lw[:, 1, 2] = -x
    if single:
        return lt[0], lw[0]
    return lt, lw


def rotational_flow(p, w: Sequence[float], K: CameraIntrinsics) -> np.ndarray:
    """Flow induced by the angular velocity alone, shape (N, 2)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    pr, qr, rr = (float(c) for c in w)
    x, y = p[:, 0], p[:, 1]
    fx, fy = K.fx, K.fy
    u = -fx * qr + rr * y + pr * x * y / fy - qr * x * x / fx
    v = fy * pr - rr * x - qr * x * y / fx + pr * y * y / fy
    return np.column_stack([u, v])


def predict_flow(p, d, v: Sequence[float], w: Sequence[float], K: CameraIntrinsics) -> np.ndarray:
    """Motion field at pixel offsets ``p`` with inverse depths ``d``."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    d = np.broadcast_to(np.asarray(d, dtype=float), (len(p),))
    vx, vy, vz = (float(c) for c in v)
    x, y = p[:, 0], p[:, 1]
    trans = np.column_stack([(x * vz - K.fx * vx) * d, (y * vz - K.fy * vy) * d])
    out = trans + rotational_flow(p, w, K)
    return out[0] if single else out


def _depth_at(model: DepthModel, pts: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    n = pixel_to_normalized(pts, K)
    return model.inverse_depth(n[:, 0], n[:, 1])


def _count_unique(pts: np.ndarray) -> int:
    return len(np.unique(pts, axis=0)) if len(pts) else 0


def stack_system(pts, flows, w, d, K: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``A v = C`` with rows ``d_i L_t_i`` and ``C = U - B w``."""
    lt, _ = interaction_matrices(pts, K)
    a = (d[:, None, None] * lt).reshape(-1, 3)
    c = (flows - rotational_flow(pts, w, K)).reshape(-1)
    return a, c


def invert_linear(
    obs,
    w: Sequence[float],
    model: DepthModel,
    K: CameraIntrinsics,
    *,
    condition_threshold: float = 1e8,
) -> EgomotionEstimate:
    """Least-squares translational velocity for a depth model with no free parameters.

    Features whose ray misses the depth model are dropped before stacking.
    The solve goes through an SVD-based least-squares routine; the reported
    condition number is that of the stacked matrix.
    """
    pts, flows = as_arrays(obs)
    d = _depth_at(model, pts, K) if len(pts) else np.zeros(0)
    ok = np.isfinite(d) & (d > 0) & np.all(np.isfinite(flows), axis=1)
    n_dropped = int(np.count_nonzero(~ok))
    pts, flows, d = pts[ok], flows[ok], d[ok]
    if _count_unique(pts) < 2:
        raise InsufficientFeatures(f"need 2 distinct usable features, have {_count_unique(pts)}")
    a, c = stack_system(pts, flows, w, d, K)
    sol, _, rank, sv = np.linalg.lstsq(a, c, rcond=None)
    if rank < 3:
        raise RankDeficient(f"stacked system has rank {rank} < 3")
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    resid = a @ sol - c
    return EgomotionEstimate(
        velocity=sol,
        residual_rms=float(np.linalg.norm(resid) / math.sqrt(len(c))),
        n_features=len(pts),
        condition_ok=bool(cond <= condition_threshold),
        condition_number=cond,
        n_dropped=n_dropped,
    )


def slope_residuals(
    params: Sequence[float], pts, flows, w, rho: float, K: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Residual ``u_est - u_obs`` and its analytic Jacobian for the slope model.

    ``params`` is ``(vx, vy, vz, alpha, beta)``.  Returns the stacked residual
    of length 2N and the (2N, 5) Jacobian.
    """
    vx, vy, vz, al, be = (float(c) for c in params)
    m = PlanarSlopeModel(al, be, rho)
    n = pixel_to_normalized(pts, K)
    d = m.inverse_depth(n[:, 0], n[:, 1])
    dda, ddb = m.inverse_depth_gradient(n[:, 0], n[:, 1])
    x, y = pts[:, 0], pts[:, 1]
    tu = x * vz - K.fx * vx
    tv = y * vz - K.fy * vy
    rot = rotational_flow(pts, w, K)
    r = np.column_stack([tu * d, tv * d]) + rot - flows
    jac = np.zeros((len(pts), 2, 5))
    jac[:, 0, 0] = -K.fx * d
    jac[:, 0, 2] = x * d
    jac[:, 1, 1] = -K.fy * d
    jac[:, 1, 2] = y * d
    jac[:, 0, 3] = tu * dda
    jac[:, 1, 3] = tv * dda
    jac[:, 0, 4] = tu * ddb
    jac[:, 1, 4] = tv * ddb
    return r.reshape(-1), jac.reshape(-1, 5)


def _project_slope(theta: np.ndarray, max_slope: float) -> np.ndarray:
    s = math.hypot(theta[3], theta[4])
    if s > max_slope:
        theta = theta.copy()
        if max_slope <= 0.0:
            theta[3:] = 0.0
        else:
            theta[3:] *= max_slope / s
    return theta


def _on_bound(theta: np.ndarray, max_slope: float) -> bool:
    return math.hypot(theta[3], theta[4]) >= max_slope * (1.0 - 1e-12)


def _tangent_basis(theta: np.ndarray, max_slope: float) -> np.ndarray:
    """Columns spanning velocity and, off the origin, the slope direction along the bound."""
    s = math.hypot(theta[3], theta[4])
    cols = [np.eye(5)[:, k] for k in range(3)]
    if max_slope > 0.0 and s > 0.0:
        cols.append(np.array([0.0, 0.0, 0.0, -theta[4] / s, theta[3] / s]))
    return np.column_stack(cols)


def invert_slope(
    obs,
    w: Sequence[float],
    rho: float,
    K: CameraIntrinsics,
    init: Optional[Sequence[float]] = None,
    *,
    max_slope: float = math.sqrt(1.0 - 1e-3),
    max_iter: int = 200,
    condition_threshold: float = 1e8,
    xtol: float = 1e-10,
    ftol: float = 1e-12,
) -> EgomotionEstimate:
    """Joint velocity and slope estimate by damped trust-region least squares.

    Levenberg-Marquardt with Marquardt diagonal scaling and gain-ratio
    damping control.  The slope pair is kept inside the disc of radius
    ``max_slope`` by radial projection of every trial step.  When the slope
    sits on the bound and the step points outward, the step is re-solved in
    the subspace of velocity plus the tangential slope direction.  The gain
    ratio is computed for the projected step.  ``max_slope=0`` pins the plane
    to the nadir orientation.
    """
    pts, flows = as_arrays(obs)
    theta = np.zeros(5) if init is None else np.asarray(init, dtype=float).copy()
    if theta.shape != (5,):
        raise ValueError("init must be (vx, vy, vz, alpha, beta)")
    if theta[3] ** 2 + theta[4] ** 2 >= 1.0:
        raise DomainError("initial slope outside the unit disc")
    theta = _project_slope(theta, max_slope)
    finite = np.all(np.isfinite(flows), axis=1)
    pts, flows = pts[finite], flows[finite]
    m0 = PlanarSlopeModel(theta[3], theta[4], rho)
    d0 = _depth_at(m0, pts, K) if len(pts) else np.zeros(0)
    ok = np.isfinite(d0)
    n_dropped = int(np.count_nonzero(~finite) + np.count_nonzero(~ok))
    pts, flows = pts[ok], flows[ok]
    if _count_unique(pts) < 3:
        raise InsufficientFeatures(f"need 3 distinct usable features, have {_count_unique(pts)}")

    def evaluate(t):
        r, j = slope_residuals(t, pts, flows, w, rho, K)
        return (r, j) if np.all(np.isfinite(r)) else (None, None)

    r, jac = evaluate(theta)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    nu = 2.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = jac.T @ r
        h = jac.T @ jac
        diag = np.maximum(np.diag(h), 1e-12 * max(np.max(np.diag(h)), 1e-300))
        if cost == 0.0 or np.max(np.abs(g)) <= 1e-300:
            converged = True
            break
        step = np.linalg.solve(h + lam * np.diag(diag), -g)
        if math.hypot(*(theta[3:] + step[3:])) > max_slope and _on_bound(theta, max_slope):
            # active bound: restrict the step to velocity plus the tangential slope direction
            basis = _tangent_basis(theta, max_slope)
            hb = basis.T @ (h + lam * np.diag(diag)) @ basis
            step = basis @ np.linalg.solve(hb, -(basis.T @ g))
        trial = _project_slope(theta + step, max_slope)
        step = trial - theta
        pred = -(g @ step + 0.5 * step @ h @ step)
        r_new, j_new = evaluate(trial)
        if r_new is None:
            lam *= nu
            nu *= 2.0
            continue
        cost_new = 0.5 * float(r_new @ r_new)
        gain = (cost - cost_new) / pred if pred > 0 else -1.0
        if gain > 0:
            decrease = cost - cost_new
            theta, r, jac, cost = trial, r_new, j_new, cost_new
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * gain - 1.0) ** 3)
            nu = 2.0
            small_step = np.linalg.norm(step) < xtol * (np.linalg.norm(theta) + xtol)
            if small_step or decrease <= ftol * (cost + decrease):
                converged = True
                break
        else:
            lam *= nu
            nu *= 2.0
            if np.linalg.norm(step) < xtol * (np.linalg.norm(theta) + xtol):
                converged = True
                break
    sv = np.linalg.svd(jac, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return EgomotionEstimate(
        velocity=theta[:3].copy(),
        slope=(float(theta[3]), float(theta[4])),
        residual_rms=float(np.linalg.norm(r) / math.sqrt(len(r))),
        n_features=len(pts),
        condition_ok=bool(cond <= condition_threshold),
        condition_number=cond,
        n_dropped=n_dropped,
        converged=converged,
        iterations=it,
    )


def relative_velocity_error(est: Sequence[float], truth: Sequence[float]) -> float:
    """``|est - truth| / |truth|``."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    nt = float(np.linalg.norm(truth))
    if nt == 0.0:
        raise ZeroTruthVelocity("relative error is undefined for a zero ground-truth velocity")
    return float(np.linalg.norm(est - truth)) / nt


def absolute_velocity_error(est: Sequence[float], truth: Sequence[float]) -> float:
    return float(np.linalg.norm(np.asarray(est, float) - np.asarray(truth, float)))
