"""Compiled terrain evaluation, ray casting and shading.

The terrain is passed around as a flat parameter vector plus a few tables so
that every kernel is a plain numba function; :mod:`flownav.sim.terrain` owns
the layout.  Heights are measured along the base-surface normal (plane) or
radially (sphere); ``(u, v)`` are the surface coordinates in metres.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

# parameter vector layout
KIND = 0
RADIUS = 1
ORIGIN = 2
NORMAL = 5
E1 = 8
E2 = 11
ROUGHNESS = 14
MAX_WAVELENGTH = 15
N_OCTAVES = 16
ALBEDO_CONTRAST = 17
H_MIN = 18
H_MAX = 19
PAD_U = 20
PAD_V = 21
PAD_RADIUS = 22
CRATER_PROB = 23
CRATER_LAYERS = 24
CRATER_CELL = 25
CRATER_DEPTH_RATIO = 26
N_PARAMS = 27

TABLE = 4096
MASK = TABLE - 1
RIM_EXTENT = 1.5
LOD_FACTOR = 3.0
ALBEDO_OCTAVES = 6
# Newton steps below this fraction of a pixel footprint end a render ray cast
RENDER_STEP_TOL = 0.02
# reassociation and contraction only: NaN/inf semantics stay intact
_FAST = {"contract", "arcp", "reassoc", "afn"}


@nb.njit(inline="always", fastmath=_FAST)
def _value_noise(x, y, perm, val):
    """Quintic-interpolated lattice value noise in [0, 1] and its gradient."""
    fx0 = math.floor(x)
    fy0 = math.floor(y)
    fx = x - fx0
    fy = y - fy0
    ix = np.int64(fx0) & MASK
    iy = np.int64(fy0) & MASK
    ux = fx * fx * fx * (fx * (fx * 6.0 - 15.0) + 10.0)
    uy = fy * fy * fy * (fy * (fy * 6.0 - 15.0) + 10.0)
    dux = 30.0 * fx * fx * (fx * (fx - 2.0) + 1.0)
    duy = 30.0 * fy * fy * (fy * (fy - 2.0) + 1.0)
    p0 = perm[ix]
    p1 = perm[ix + 1]
    a = val[perm[p0 + iy]]
    b = val[perm[p1 + iy]]
    c = val[perm[p0 + iy + 1]]
    d = val[perm[p1 + iy + 1]]
    k = a - b - c + d
    v = a + (b - a) * ux + (c - a) * uy + k * ux * uy
    return v, dux * ((b - a) + k * uy), duy * ((c - a) + k * ux)


@nb.njit(inline="always")
def _lod_level(footprint):
    return math.log2(LOD_FACTOR * footprint) if footprint > 0.0 else -np.inf


@nb.njit(inline="always")
def _lod_weight(log_wavelength, lod):
    # 1 for features well above the pixel footprint, fading to 0 near Nyquist
    w = log_wavelength - lod
    if w <= 0.0:
        return 0.0
    if w >= 1.0:
        return 1.0
    return w


@nb.njit(inline="always")
def _crater_profile(q):
    """Bowl with a raised rim; -1 at the centre, 0 at q = 1, flat beyond the rim."""
    if q >= RIM_EXTENT:
        return 0.0, 0.0
    k2 = RIM_EXTENT * RIM_EXTENT
    s = 1.0 - q * q / k2
    g = (q * q - 1.0) * s * s
    dg = 2.0 * q * s * s - (q * q - 1.0) * 4.0 * q * s / k2
    return g, dg


@nb.njit(inline="always")
def _cell_hash(i, j, layer, perm):
    return perm[(perm[(i + 977 * layer) & MASK] + j) & MASK]


@nb.njit(inline="always", fastmath=_FAST)
def _crater_field(u, v, lod, tp, perm, val):
    # crater extent stays below half a cell, so the 2x2 nearest cells suffice
    h = 0.0
    hu = 0.0
    hv = 0.0
    hu_lod = 0.0
    hv_lod = 0.0
    cell = tp[CRATER_CELL]
    prob = tp[CRATER_PROB]
    ratio = tp[CRATER_DEPTH_RATIO]
    for layer in range(int(tp[CRATER_LAYERS])):
        gu_ = u / cell
        gv_ = v / cell
        ci = math.floor(gu_)
        cj = math.floor(gv_)
        si = 1 if gu_ - ci >= 0.5 else -1
        sj = 1 if gv_ - cj >= 0.5 else -1
        for a in range(2):
            for b in range(2):
                i = np.int64(ci) + a * si
                j = np.int64(cj) + b * sj
                hsh = _cell_hash(i, j, layer, perm)
                if val[hsh] >= prob:
                    continue
                cu = (i + val[(hsh + 101) & MASK]) * cell
                cv = (j + val[(hsh + 211) & MASK]) * cell
                # radius biased toward small craters
                r = cell * (0.06 + 0.26 * val[(hsh + 307) & MASK] ** 2)
                du = u - cu
                dv = v - cv
                dist = math.sqrt(du * du + dv * dv)
                q = dist / r
                if q >= RIM_EXTENT:
                    continue
                depth = ratio * 2.0 * r
                g, dg = _crater_profile(q)
                h += depth * g
                if dist > 0.0:
                    gu = depth * dg * du / (dist * r)
                    gv = depth * dg * dv / (dist * r)
                    hu += gu
                    hv += gv
                    w = _lod_weight(math.log2(2.0 * r), lod) if lod > -np.inf else 1.0
                    hu_lod += w * gu
                    hv_lod += w * gv
        cell *= 0.25
    return h, hu, hv, hu_lod, hv_lod


@nb.njit(inline="always", fastmath=_FAST)
def surface_height(u, v, footprint, tp, perm, val, offsets, craters, mounds):
    """Height above the base surface at ``(u, v)``.

    Returns ``(h, hu, hv, hu_lod, hv_lod)``: the exact gradient and a copy in
    which detail finer than ``footprint`` (m/px) is faded out for shading.
    """
    # fractal relief, amplitude proportional to wavelength
    h = 0.0
    hu = 0.0
    hv = 0.0
    hu_l = 0.0
    hv_l = 0.0
    lam = tp[MAX_WAVELENGTH]
    llam = math.log2(lam)
    lod = _lod_level(footprint)
    rough = tp[ROUGHNESS]
    for k in range(int(tp[N_OCTAVES])):
        amp = rough * lam
        n, nx, ny = _value_noise(u / lam + offsets[k, 0], v / lam + offsets[k, 1], perm, val)
        h += amp * (n - 0.5)
        gu = amp * nx / lam
        gv = amp * ny / lam
        hu += gu
        hv += gv
        w = _lod_weight(llam, lod)
        hu_l += w * gu
        hv_l += w * gv
        lam *= 0.5
        llam -= 1.0
    if tp[CRATER_LAYERS] > 0 and tp[CRATER_PROB] > 0:
        ch, chu, chv, chu_l, chv_l = _crater_field(u, v, lod, tp, perm, val)
        h += ch
        hu += chu
        hv += chv
        hu_l += chu_l
        hv_l += chv_l
    # landing pad: fade the random relief to zero inside the pad
    if tp[PAD_RADIUS] > 0.0:
        du = u - tp[PAD_U]
        dv = v - tp[PAD_V]
        dist = math.sqrt(du * du + dv * dv)
        r0 = 0.5 * tp[PAD_RADIUS]
        r1 = tp[PAD_RADIUS]
        if dist < r1:
            if dist <= r0:
                m = 0.0
                dm = 0.0
            else:
                s = (dist - r0) / (r1 - r0)
                m = s * s * (3.0 - 2.0 * s)
                dm = 6.0 * s * (1.0 - s) / (r1 - r0)
            mu = dm * du / dist if dist > 0.0 else 0.0
            mv = dm * dv / dist if dist > 0.0 else 0.0
            hu = m * hu + mu * h
            hv = m * hv + mv * h
            hu_l = m * hu_l + mu * h
            hv_l = m * hv_l + mv * h
            h = m * h
    for c in range(craters.shape[0]):
        du = u - craters[c, 0]
        dv = v - craters[c, 1]
        dist = math.sqrt(du * du + dv * dv)
        q = dist / craters[c, 2]
        if q >= RIM_EXTENT:
            continue
        g, dg = _crater_profile(q)
        h += craters[c, 3] * g
        if dist > 0.0:
            gu = craters[c, 3] * dg * du / (dist * craters[c, 2])
            gv = craters[c, 3] * dg * dv / (dist * craters[c, 2])
            hu += gu
            hv += gv
            hu_l += gu
            hv_l += gv
    for c in range(mounds.shape[0]):
        du = u - mounds[c, 0]
        dv = v - mounds[c, 1]
        r2 = (du * du + dv * dv) / (mounds[c, 2] * mounds[c, 2])
        if r2 >= 1.0:
            continue
        s = 1.0 - r2
        h += mounds[c, 3] * s * s
        gscale = -4.0 * mounds[c, 3] * s / (mounds[c, 2] * mounds[c, 2])
        hu += gscale * du
        hv += gscale * dv
        hu_l += gscale * du
        hv_l += gscale * dv
    return h, hu, hv, hu_l, hv_l


@nb.njit(inline="always", fastmath=_FAST)
def albedo(u, v, footprint, tp, perm, val, offsets):
    """Band-limited multi-octave albedo, mean 1; octaves follow the pixel footprint."""
    contrast = tp[ALBEDO_CONTRAST]
    if contrast <= 0.0:
        return 1.0
    lod = math.log2(max(2.0 * footprint, 1e-6))
    k0 = int(math.floor(lod))
    fr = lod - k0
    acc = 0.0
    for k in range(k0, k0 + ALBEDO_OCTAVES + 1):
        lam = 2.0 ** k
        w = 1.0
        if k == k0:
            w = 1.0 - fr
        elif k == k0 + ALBEDO_OCTAVES:
            w = fr
        oi = (k + 64) & 63
        n, _, _ = _value_noise(u / lam + offsets[oi, 1], v / lam + offsets[oi, 0], perm, val)
        acc += w * (n - 0.5)
    a = 1.0 + contrast * acc * (4.0 / math.sqrt(ALBEDO_OCTAVES))
    return a if a > 0.05 else 0.05


@nb.njit(inline="always")
def _surface_coords(px, py, pz, tp):
    """World point to ``(u, v, s)``, s being height above the base surface."""
    if tp[KIND] == 0.0:
        qx = px - tp[ORIGIN]
        qy = py - tp[ORIGIN + 1]
        qz = pz - tp[ORIGIN + 2]
        u = qx * tp[E1] + qy * tp[E1 + 1] + qz * tp[E1 + 2]
        v = qx * tp[E2] + qy * tp[E2 + 1] + qz * tp[E2 + 2]
        s = qx * tp[NORMAL] + qy * tp[NORMAL + 1] + qz * tp[NORMAL + 2]
        return u, v, s
    r = math.sqrt(px * px + py * py + pz * pz)
    rxy = math.sqrt(px * px + py * py)
    R = tp[RADIUS]
    return R * math.atan2(py, px), R * math.atan2(pz, rxy), r - R


@nb.njit(inline="always")
def _coord_rates(px, py, pz, dx, dy, dz, tp):
    """Derivatives of ``(u, v, s)`` along the ray direction."""
    if tp[KIND] == 0.0:
        du = dx * tp[E1] + dy * tp[E1 + 1] + dz * tp[E1 + 2]
        dv = dx * tp[E2] + dy * tp[E2 + 1] + dz * tp[E2 + 2]
        ds = dx * tp[NORMAL] + dy * tp[NORMAL + 1] + dz * tp[NORMAL + 2]
        return du, dv, ds
    R = tp[RADIUS]
    rxy2 = px * px + py * py
    rxy = math.sqrt(rxy2)
    r2 = rxy2 + pz * pz
    r = math.sqrt(r2)
    dlon = (px * dy - py * dx) / rxy2
    dlat = (dz * rxy2 - pz * (px * dx + py * dy)) / (r2 * rxy)
    return R * dlon, R * dlat, (px * dx + py * dy + pz * dz) / r


@nb.njit(inline="always")
def _shell_hits(cx, cy, cz, dx, dy, dz, level, tp):
    """Ray parameters entering and leaving the level set ``s = level`` of the base surface."""
    if tp[KIND] == 0.0:
        s0 = ((cx - tp[ORIGIN]) * tp[NORMAL] + (cy - tp[ORIGIN + 1]) * tp[NORMAL + 1]
              + (cz - tp[ORIGIN + 2]) * tp[NORMAL + 2])
        ds = dx * tp[NORMAL] + dy * tp[NORMAL + 1] + dz * tp[NORMAL + 2]
        if ds >= 0.0:
            return np.nan, np.nan
        t = (level - s0) / ds
        return t, np.inf
    rr = tp[RADIUS] + level
    b = cx * dx + cy * dy + cz * dz
    c = cx * cx + cy * cy + cz * cz - rr * rr
    disc = b * b - c
    if disc < 0.0:
        return np.nan, np.nan
    sq = math.sqrt(disc)
    # stable pair of roots of t^2 + 2 b t + c = 0
    q = -(b + math.copysign(sq, b))
    t1 = q
    t2 = c / q if q != 0.0 else -b
    return min(t1, t2), max(t1, t2)


@nb.njit(inline="always")
def _height_gap(t, cx, cy, cz, dx, dy, dz, footprint, tp, perm, val, offsets, craters, mounds):
    px = cx + t * dx
    py = cy + t * dy
    pz = cz + t * dz
    u, v, s = _surface_coords(px, py, pz, tp)
    h, hu, hv, hu_l, hv_l = surface_height(u, v, footprint * t, tp, perm, val, offsets,
                                           craters, mounds)
    du, dv, ds = _coord_rates(px, py, pz, dx, dy, dz, tp)
    return s - h, ds - hu * du - hv * dv, u, v, hu_l, hv_l


@nb.njit
def camera_clearance(cx, cy, cz, tp, perm, val, offsets, craters, mounds):
    """Height of the camera above the terrain directly below it."""
    u, v, s = _surface_coords(cx, cy, cz, tp)
    h, _, _, _, _ = surface_height(u, v, 0.0, tp, perm, val, offsets, craters, mounds)
    return s - h


@nb.njit(inline="always")
def raycast(cx, cy, cz, dx, dy, dz, guess, footprint, tol, tp, perm, val, offsets, craters,
            mounds):
    """Distance along the unit ray to the terrain.

    The root of ``s(t) - h(u(t), v(t))`` is bracketed between the shells
    ``s = h_max`` and ``s = h_min`` and refined by Newton steps that fall
    back to bisection whenever they leave the bracket.  The caller must have
    checked that the camera is above the terrain.  ``footprint`` is the
    angular pixel size used for the shading gradient.

    Returns ``(t, u, v, hu_lod, hv_lod)``; t is NaN on a miss.
    """
    t_out0, t_out1 = _shell_hits(cx, cy, cz, dx, dy, dz, tp[H_MAX], tp)
    if math.isnan(t_out0) or t_out1 < 0.0:
        return np.nan, 0.0, 0.0, 0.0, 0.0
    lo = max(t_out0, 0.0)
    t_in0, t_in1 = _shell_hits(cx, cy, cz, dx, dy, dz, tp[H_MIN], tp)
    if math.isnan(t_in0) or t_in0 < 0.0:
        if tp[KIND] == 0.0:
            return np.nan, 0.0, 0.0, 0.0, 0.0
        # grazing ray: search up to the point of closest approach
        hi = -(cx * dx + cy * dy + cz * dz)
        if hi <= lo:
            return np.nan, 0.0, 0.0, 0.0, 0.0
        f_hi, _, _, _, _, _ = _height_gap(hi, cx, cy, cz, dx, dy, dz, 0.0, tp, perm, val,
                                          offsets, craters, mounds)
        if f_hi > 0.0:
            return np.nan, 0.0, 0.0, 0.0, 0.0
    else:
        hi = t_in0
    t = guess if (guess > lo and guess < hi) else 0.5 * (lo + hi)
    u = 0.0
    v = 0.0
    hu = 0.0
    hv = 0.0
    for _ in range(200):
        f, df, u, v, hu, hv = _height_gap(t, cx, cy, cz, dx, dy, dz, footprint, tp, perm, val,
                                          offsets, craters, mounds)
        if f == 0.0:
            return t, u, v, hu, hv
        if f > 0.0:
            lo = t
        else:
            hi = t
        if df < 0.0:
            t_new = t - f / df
            if not (t_new > lo and t_new < hi):
                t_new = 0.5 * (lo + hi)
        else:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= tol * t_new or hi - lo <= tol * hi:
            return t_new, u, v, hu, hv
        t = t_new
    return t, u, v, hu, hv


@nb.njit(inline="always")
def _shading_normal(px, py, pz, hu, hv, tp):
    if tp[KIND] == 0.0:
        nx = tp[NORMAL] - hu * tp[E1] - hv * tp[E2]
        ny = tp[NORMAL + 1] - hu * tp[E1 + 1] - hv * tp[E2 + 1]
        nz = tp[NORMAL + 2] - hu * tp[E1 + 2] - hv * tp[E2 + 2]
    else:
        r = math.sqrt(px * px + py * py + pz * pz)
        rxy = math.sqrt(px * px + py * py)
        ux, uy, uz = px / r, py / r, pz / r
        ex, ey = -py / rxy, px / rxy
        # north = up x east
        nx_, ny_, nz_ = -uz * ey, uz * ex, ux * ey - uy * ex
        nx = ux - hu * ex - hv * nx_
        ny = uy - hu * ey - hv * ny_
        nz = uz - hv * nz_
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    return nx / nn, ny / nn, nz / nn


@nb.njit(parallel=True, cache=True)
def render_kernel(C, W, fx, fy, cx, cy, width, height, sun, tol, tp, perm, val, offsets, craters,
                  mounds, radiance, depth):
    """Per-pixel ray cast and shading into ``radiance`` (unscaled) and ``depth`` (Z).

    Rows are independent; within a row the previous hit seeds the next
    Newton solve, so the output does not depend on the thread count.
    """
    clear = camera_clearance(C[0], C[1], C[2], tp, perm, val, offsets, craters, mounds) > 0.0
    for i in nb.prange(height):
        guess = -1.0
        for j in range(width):
            if not clear:
                radiance[i, j] = 0.0
                depth[i, j] = np.nan
                continue
            xr = (j - cx) / fx
            yr = (i - cy) / fy
            nrm = math.sqrt(xr * xr + yr * yr + 1.0)
            dx = (W[0, 0] * xr + W[0, 1] * yr + W[0, 2]) / nrm
            dy = (W[1, 0] * xr + W[1, 1] * yr + W[1, 2]) / nrm
            dz = (W[2, 0] * xr + W[2, 1] * yr + W[2, 2]) / nrm
            t, u, v, hu, hv = raycast(C[0], C[1], C[2], dx, dy, dz, guess, 1.0 / fx, tol, tp,
                                      perm, val, offsets, craters, mounds)
            if math.isnan(t):
                radiance[i, j] = 0.0
                depth[i, j] = np.nan
                guess = -1.0
                continue
            guess = t
            depth[i, j] = t / nrm
            px = C[0] + t * dx
            py = C[1] + t * dy
            pz = C[2] + t * dz
            nx, ny, nz = _shading_normal(px, py, pz, hu, hv, tp)
            lam = nx * sun[0] + ny * sun[1] + nz * sun[2]
            if lam <= 0.0:
                radiance[i, j] = 0.0
            else:
                radiance[i, j] = lam * albedo(u, v, t / fx, tp, perm, val, offsets)


@nb.njit(cache=True)
def raycast_many(C, dirs, tp, perm, val, offsets, craters, mounds):
    out = np.empty(dirs.shape[0])
    if camera_clearance(C[0], C[1], C[2], tp, perm, val, offsets, craters, mounds) <= 0.0:
        out[:] = np.nan
        return out
    for k in range(dirs.shape[0]):
        t, _, _, _, _ = raycast(C[0], C[1], C[2], dirs[k, 0], dirs[k, 1], dirs[k, 2], -1.0, 0.0,
                                1e-14, tp, perm, val, offsets, craters, mounds)
        out[k] = t
    return out


@nb.njit(cache=True)
def height_many(u, v, tp, perm, val, offsets, craters, mounds):
    out = np.empty((u.shape[0], 3))
    for k in range(u.shape[0]):
        h, hu, hv, _, _ = surface_height(u[k], v[k], 0.0, tp, perm, val, offsets, craters,
                                         mounds)
        out[k, 0] = h
        out[k, 1] = hu
        out[k, 2] = hv
    return out
