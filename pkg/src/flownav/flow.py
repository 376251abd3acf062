"""Sparse optical flow: Shi-Tomasi corners tracked by pyramidal Lucas-Kanade.

Images are 8-bit grayscale ``ndarray`` of shape (height, width).  Feature and
track positions are raster coordinates ``(col, row)`` with the origin at the
centre of the top-left pixel.  :func:`estimate_flow` converts to the
principal-point-relative pixel offsets used by :mod:`flownav.motion`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np
from numba.typed import List as NumbaList

from .exceptions import ImageTooSmall, NoFeatures
from .geometry import CameraIntrinsics, raster_to_pixel

@dataclass(frozen=True)
class LKParams:
    max_corners: int = 1000
    quality_level: float = 0.1
    min_distance: float = 50.0
    block_size: int = 10
    window: int = 50
    pyramid_levels: int = 4
    epsilon: float = 0.03
    max_iters: int = 10
    # fraction of the squared 8-bit dynamic range
    min_eig_threshold: float = 1e-4

    def __post_init__(self) -> None:
        for name in ("max_corners", "min_distance", "block_size", "window", "pyramid_levels",
                     "epsilon", "max_iters"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LKParams.{name} must be positive")
        if not 0.0 < self.quality_level <= 1.0:
            raise ValueError("LKParams.quality_level must lie in (0, 1]")


class Features(NamedTuple):
    positions: np.ndarray  # (N, 2) raster (col, row)
    scores: np.ndarray  # (N,) minimum-eigenvalue response


class TrackResult(NamedTuple):
    positions: np.ndarray  # (N, 2) raster (col, row) in the next frame
    status: np.ndarray  # (N,) True where tracked
    residual: np.ndarray  # (N,) mean absolute intensity mismatch, bias removed


class FlowField(NamedTuple):
    """Tracked features as principal-point-relative points and flow in px/s."""

    points: np.ndarray
    flows: np.ndarray


def as_gray(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected 8-bit pixels, got {img.dtype}")
    return img


@nb.njit(cache=True)
def _gradients(f):
    h, w = f.shape
    gx = np.empty((h, w), dtype=np.float32)
    gy = np.empty((h, w), dtype=np.float32)
    for i in range(h):
        up = max(i - 1, 0)
        dn = min(i + 1, h - 1)
        for j in range(w):
            gx[i, j] = 0.5 * (np.float32(f[i, min(j + 1, w - 1)]) - np.float32(f[i, max(j - 1, 0)]))
            gy[i, j] = 0.5 * (np.float32(f[dn, j]) - np.float32(f[up, j]))
    return gx, gy


def image_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicated borders, as float32."""
    return _gradients(np.ascontiguousarray(img))


@nb.njit(cache=True)
def _min_eig_kernel(gx, gy, size):
    # box mean over [i - size//2, i + size - size//2 - 1] per axis, replicated edges;
    # column sums roll down the image, row sums slide along each output row
    h, w = gx.shape
    lo = size // 2
    hi = size - lo - 1
    cxx = np.zeros(w)
    cxy = np.zeros(w)
    cyy = np.zeros(w)
    for k in range(-lo, hi + 1):
        r = min(max(k, 0), h - 1)
        for j in range(w):
            x = np.float64(gx[r, j])
            y = np.float64(gy[r, j])
            cxx[j] += x * x
            cxy[j] += x * y
            cyy[j] += y * y
    inv = 1.0 / (size * size)
    out = np.empty((h, w))
    for i in range(h):
        axx = 0.0
        axy = 0.0
        ayy = 0.0
        for k in range(-lo, hi + 1):
            j = min(max(k, 0), w - 1)
            axx += cxx[j]
            axy += cxy[j]
            ayy += cyy[j]
        for j in range(w):
            a = axx * inv
            b = axy * inv
            c = ayy * inv
            d = 0.25 * (a - c) * (a - c) + b * b
            out[i, j] = 0.5 * (a + c) - math.sqrt(d if d > 0.0 else 0.0)
            jn = min(j + 1 + hi, w - 1)
            jo = max(j - lo, 0)
            axx += cxx[jn] - cxx[jo]
            axy += cxy[jn] - cxy[jo]
            ayy += cyy[jn] - cyy[jo]
        rn = min(i + 1 + hi, h - 1)
        ro = max(i - lo, 0)
        for j in range(w):
            xn = np.float64(gx[rn, j])
            yn = np.float64(gy[rn, j])
            xo = np.float64(gx[ro, j])
            yo = np.float64(gy[ro, j])
            cxx[j] += xn * xn - xo * xo
            cxy[j] += xn * yn - xo * yo
            cyy[j] += yn * yn - yo * yo
    return out


def min_eigenvalue_map(img: np.ndarray, block_size: int, grads=None) -> np.ndarray:
    """Shi-Tomasi response: smallest eigenvalue of the box-averaged structure tensor."""
    gx, gy = image_gradients(img) if grads is None else grads
    return _min_eig_kernel(gx, gy, int(block_size))


@nb.njit(cache=True)
def _local_max_candidates(score, thresh, border):
    h, w = score.shape
    rows = np.empty(h * w // 4 + 1, dtype=np.int64)
    cols = np.empty(h * w // 4 + 1, dtype=np.int64)
    n = 0
    for i in range(border, h - border):
        up = max(i - 1, 0)
        dn = min(i + 1, h - 1)
        for j in range(border, w - border):
            s = score[i, j]
            if s < thresh or s <= 0.0:
                continue
            lf = max(j - 1, 0)
            rt = min(j + 1, w - 1)
            if (score[i, lf] > s or score[i, rt] > s or score[up, lf] > s or score[up, j] > s
                    or score[up, rt] > s or score[dn, lf] > s or score[dn, j] > s
                    or score[dn, rt] > s):
                continue
            if n < len(rows):
                rows[n] = i
                cols[n] = j
                n += 1
    return rows[:n], cols[:n]


@nb.njit(cache=True)
def _greedy_spacing(cols, rows, min_distance, max_corners, width, height):
    cell = max(min_distance, 1.0)
    ncx = int(width / cell) + 1
    ncy = int(height / cell) + 1
    counts = np.zeros((ncy, ncx), dtype=np.int64)
    cap = 16
    slots = np.empty((ncy, ncx, cap), dtype=np.int64)
    keep = np.empty(len(cols), dtype=np.int64)
    nkeep = 0
    md2 = min_distance * min_distance
    for i in range(len(cols)):
        if nkeep >= max_corners:
            break
        cx = int(cols[i] / cell)
        cy = int(rows[i] / cell)
        ok = True
        for yy in range(max(cy - 1, 0), min(cy + 2, ncy)):
            for xx in range(max(cx - 1, 0), min(cx + 2, ncx)):
                for s in range(counts[yy, xx]):
                    j = slots[yy, xx, s]
                    dx = cols[j] - cols[i]
                    dy = rows[j] - rows[i]
                    if dx * dx + dy * dy < md2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok and counts[cy, cx] < cap:
            slots[cy, cx, counts[cy, cx]] = i
            counts[cy, cx] += 1
            keep[nkeep] = i
            nkeep += 1
    return keep[:nkeep]


def shi_tomasi_detect(img, params: LKParams = LKParams(), border: int = 0, grads=None) -> Features:
    """Good-features-to-track corner selection.

    Candidates are 3x3 local maxima of the minimum-eigenvalue map that reach
    ``quality_level`` times the global maximum; they are accepted greedily by
    descending score while keeping ``min_distance`` spacing.  ``border``
    excludes a margin around the image (e.g. half the tracking window).
    ``grads`` optionally supplies precomputed :func:`image_gradients`.
    """
    img = as_gray(img)
    h, w = img.shape
    if min(h, w) <= params.block_size:
        raise NoFeatures(f"image {w}x{h} is not larger than the block size")
    score = min_eigenvalue_map(img, params.block_size, grads)
    peak = float(score.max())
    if not peak > 0.0:
        raise NoFeatures("no gradient structure in the image")
    rows, cols = _local_max_candidates(score, params.quality_level * peak, max(int(border), 0))
    if len(rows) == 0:
        raise NoFeatures("no corner passed the quality threshold")
    vals = score[rows, cols]
    # descending score, raster order among ties
    order = np.lexsort((rows * w + cols, -vals))
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = _greedy_spacing(
        cols.astype(np.float64), rows.astype(np.float64),
        float(params.min_distance), int(params.max_corners), w, h,
    )
    pos = np.column_stack([cols[keep], rows[keep]]).astype(np.float64)
    return Features(pos, vals[keep].astype(np.float64))


def build_pyramid(img, levels: int) -> list[np.ndarray]:
    """Gaussian pyramid: 5-tap binomial low-pass then 2x decimation per level."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    base = np.asarray(img, dtype=np.float32)
    if min(base.shape) < 2 ** (levels - 1):
        raise ImageTooSmall(f"image {base.shape[::-1]} too small for {levels} pyramid levels")
    pyr = [np.ascontiguousarray(base)]
    for _ in range(levels - 1):
        pyr.append(_pyr_down(pyr[-1]))
    return pyr


@nb.njit(cache=True)
def _pyr_down(src):
    # [1 4 6 4 1]/16 separable low-pass with replicated borders, keep even samples
    h, w = src.shape
    h2 = (h + 1) // 2
    w2 = (w + 1) // 2
    tmp = np.empty((h2, w), dtype=np.float32)
    for i in range(h2):
        r = 2 * i
        rm2 = max(r - 2, 0)
        rm1 = max(r - 1, 0)
        rp1 = min(r + 1, h - 1)
        rp2 = min(r + 2, h - 1)
        for j in range(w):
            tmp[i, j] = (src[rm2, j] + src[rp2, j] + 4.0 * (src[rm1, j] + src[rp1, j])
                         + 6.0 * src[r, j]) * (1.0 / 16.0)
    out = np.empty((h2, w2), dtype=np.float32)
    for i in range(h2):
        for j in range(w2):
            c = 2 * j
            out[i, j] = (tmp[i, max(c - 2, 0)] + tmp[i, min(c + 2, w - 1)]
                         + 4.0 * (tmp[i, max(c - 1, 0)] + tmp[i, min(c + 1, w - 1)])
                         + 6.0 * tmp[i, c]) * (1.0 / 16.0)
    return out


@nb.njit(cache=True)
def _clamped_taps(start, window, size, i0, i1, frac):
    for q in range(window):
        x = start + q
        if x < 0.0:
            x = 0.0
        elif x > size - 1:
            x = size - 1.0
        j = int(x)
        i0[q] = j
        i1[q] = min(j + 1, size - 1)
        frac[q] = x - j


# reassociation lets the window loops vectorise; NaN and Inf semantics are kept
_FAST = {"reassoc", "contract", "nsz"}


@nb.njit(cache=True, fastmath=_FAST)
def _sample_window(img, x0, y0, window, out):
    """Bilinear samples on the grid ``(x0 + q, y0 + r)``; clamps only when needed."""
    h, w = img.shape
    ix = math.floor(x0)
    iy = math.floor(y0)
    if ix >= 0 and iy >= 0 and ix + window < w and iy + window < h:
        one = np.float32(1.0)
        ax = np.float32(x0 - ix)
        ay = np.float32(y0 - iy)
        w00 = (one - ax) * (one - ay)
        w01 = ax * (one - ay)
        w10 = (one - ax) * ay
        w11 = ax * ay
        k = 0
        for r in range(window):
            top = img[iy + r, ix:ix + window + 1]
            bot = img[iy + r + 1, ix:ix + window + 1]
            for q in range(window):
                out[k] = w00 * top[q] + w01 * top[q + 1] + w10 * bot[q] + w11 * bot[q + 1]
                k += 1
    else:
        # clamped taps are separable: precompute them per column and per row
        c0 = np.empty(window, dtype=np.int64)
        c1 = np.empty(window, dtype=np.int64)
        cw = np.empty(window, dtype=np.float32)
        r0 = np.empty(window, dtype=np.int64)
        r1 = np.empty(window, dtype=np.int64)
        rw = np.empty(window, dtype=np.float32)
        _clamped_taps(x0, window, w, c0, c1, cw)
        _clamped_taps(y0, window, h, r0, r1, rw)
        k = 0
        for r in range(window):
            ay = rw[r]
            for q in range(window):
                ax = cw[q]
                top = img[r0[r], c0[q]] + ax * (img[r0[r], c1[q]] - img[r0[r], c0[q]])
                bot = img[r1[r], c0[q]] + ax * (img[r1[r], c1[q]] - img[r1[r], c0[q]])
                out[k] = top + ay * (bot - top)
                k += 1


@nb.njit(cache=True, fastmath=_FAST)
def _mismatch(img, x0, y0, window, tmpl, tgx, tgy, warped):
    """Sums of ``(T - J) * grad T`` and of ``T - J`` over the window warped to ``(x0, y0)``."""
    h, w = img.shape
    ix = math.floor(x0)
    iy = math.floor(y0)
    bx = 0.0
    by = 0.0
    be = 0.0
    if ix >= 0 and iy >= 0 and ix + window < w and iy + window < h:
        one = np.float32(1.0)
        ax = np.float32(x0 - ix)
        ay = np.float32(y0 - iy)
        w00 = (one - ax) * (one - ay)
        w01 = ax * (one - ay)
        w10 = (one - ax) * ay
        w11 = ax * ay
        k = 0
        for r in range(window):
            top = img[iy + r, ix:ix + window + 1]
            bot = img[iy + r + 1, ix:ix + window + 1]
            for q in range(window):
                e = tmpl[k] - (w00 * top[q] + w01 * top[q + 1] + w10 * bot[q] + w11 * bot[q + 1])
                bx += e * tgx[k]
                by += e * tgy[k]
                be += e
                k += 1
        return bx, by, be
    _sample_window(img, x0, y0, window, warped)
    for k in range(window * window):
        e = tmpl[k] - warped[k]
        bx += e * tgx[k]
        by += e * tgy[k]
        be += e
    return bx, by, be


@nb.njit(cache=True, fastmath=_FAST)
def _lk_kernel(prev_levels, gx_levels, gy_levels, next_levels, pads, pts, window, eps,
               max_iters, min_eig):
    n = pts.shape[0]
    nlev = len(prev_levels)
    out = np.empty((n, 2))
    status = np.ones(n, dtype=np.bool_)
    resid = np.zeros(n)
    hw = 0.5 * (window - 1)
    npx = window * window
    tmpl = np.empty(npx, dtype=np.float32)
    tgx = np.empty(npx, dtype=np.float32)
    tgy = np.empty(npx, dtype=np.float32)
    warped = np.empty(npx, dtype=np.float32)
    for i in range(n):
        gxg = 0.0
        gyg = 0.0
        nu_x = 0.0
        nu_y = 0.0
        lost = False
        for lev in range(nlev - 1, -1, -1):
            scale = 1.0 / (1 << lev)
            px = pts[i, 0] * scale
            py = pts[i, 1] * scale
            # window origin in the (possibly border-padded) level image
            ox = px - hw + pads[lev]
            oy = py - hw + pads[lev]
            _sample_window(prev_levels[lev], ox, oy, window, tmpl)
            _sample_window(gx_levels[lev], ox, oy, window, tgx)
            _sample_window(gy_levels[lev], ox, oy, window, tgy)
            a = 0.0
            b = 0.0
            c = 0.0
            sx = 0.0
            sy = 0.0
            for k in range(npx):
                a += tgx[k] * tgx[k]
                b += tgx[k] * tgy[k]
                c += tgy[k] * tgy[k]
                sx += tgx[k]
                sy += tgy[k]
            # an intensity bias is solved with the shift and eliminated (Schur complement),
            # so a constant brightness change between frames does not move the estimate
            a -= sx * sx / npx
            b -= sx * sy / npx
            c -= sy * sy / npx
            det = a * c - b * b
            lmin = (0.5 * (a + c) - math.sqrt(0.25 * (a - c) * (a - c) + b * b)) / npx
            nu_x = 0.0
            nu_y = 0.0
            if lmin < min_eig or det <= 0.0:
                if lev == 0:
                    lost = True
                    break
            else:
                img_j = next_levels[lev]
                for it in range(max_iters):
                    bx, by, be = _mismatch(img_j, ox + gxg + nu_x, oy + gyg + nu_y,
                                           window, tmpl, tgx, tgy, warped)
                    bx -= be * sx / npx
                    by -= be * sy / npx
                    ex = (c * bx - b * by) / det
                    ey = (a * by - b * bx) / det
                    nu_x += ex
                    nu_y += ey
                    if ex * ex + ey * ey < eps * eps:
                        break
                if nu_x * nu_x + nu_y * nu_y > hw * hw:
                    lost = True
                    break
            if lev > 0:
                gxg = 2.0 * (gxg + nu_x)
                gyg = 2.0 * (gyg + nu_y)
        if lost:
            status[i] = False
            out[i, 0] = np.nan
            out[i, 1] = np.nan
            resid[i] = np.nan
            continue
        fx = pts[i, 0] + gxg + nu_x
        fy = pts[i, 1] + gyg + nu_y
        out[i, 0] = fx
        out[i, 1] = fy
        h0 = next_levels[0].shape[0] - 2 * pads[0]
        w0 = next_levels[0].shape[1] - 2 * pads[0]
        if fx - hw < 0.0 or fy - hw < 0.0 or fx + hw > w0 - 1 or fy + hw > h0 - 1:
            status[i] = False
        _sample_window(next_levels[0], fx - hw + pads[0], fy - hw + pads[0], window, warped)
        mean = 0.0
        for k in range(npx):
            mean += tmpl[k] - warped[k]
        mean /= npx
        acc = 0.0
        for k in range(npx):
            acc += abs(tmpl[k] - warped[k] - mean)
        resid[i] = acc / npx
    return out, status, resid


def _levels_list(pyr):
    lst = NumbaList()
    for lev in pyr:
        lst.append(np.ascontiguousarray(lev, dtype=np.float32))
    return lst


def lk_track(prev_pyr, next_pyr, features, params: LKParams = LKParams(),
             prev_grads=None) -> TrackResult:
    """Coarse-to-fine iterative Lucas-Kanade tracking of ``features``.

    ``features`` is an (N, 2) array of raster positions (or a :class:`Features`).
    Gradient images of ``prev_pyr`` may be passed in to avoid recomputation.
    A feature is lost when the level-0 system is degenerate, when a level's
    refinement runs beyond half the window, or when the final window leaves
    the image.
    """
    if len(prev_pyr) != len(next_pyr):
        raise ValueError("pyramids must have the same number of levels")
    for a, b in zip(prev_pyr, next_pyr):
        if a.shape != b.shape:
            raise ValueError("pyramids must have identical geometry")
    pts = features.positions if isinstance(features, Features) else features
    pts = np.ascontiguousarray(np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    if prev_grads is None:
        prev_grads = [image_gradients(lev) for lev in prev_pyr]
    if len(pts) == 0:
        return TrackResult(np.zeros((0, 2)), np.zeros(0, dtype=bool), np.zeros(0))
    # replicated borders equal the clamped sampling; they keep windows on the fast path at the
    # coarse levels, where the window spans much of the image
    pads = np.array([0] + [int(params.window) + 2] * (len(prev_pyr) - 1), dtype=np.int64)

    def levels(pyr):
        return _levels_list([np.pad(lev, p, mode="edge") if p else lev
                             for lev, p in zip(pyr, pads)])

    out, status, resid = _lk_kernel(
        levels(prev_pyr), levels([g[0] for g in prev_grads]), levels([g[1] for g in prev_grads]),
        levels(next_pyr), pads, pts, int(params.window), float(params.epsilon),
        int(params.max_iters), float(params.min_eig_threshold) * 255.0**2,
    )
    return TrackResult(out, status, resid)


def estimate_flow(prev, next, dt: float, params: LKParams = LKParams(),
                  K: CameraIntrinsics | None = None, *, prev_pyr=None, next_pyr=None,
                  midpoint: bool = False) -> FlowField:
    """Detect on ``prev``, track into ``next`` and return flow in px/s.

    Points are returned relative to the principal point of ``K`` (image
    centre when ``K`` is None).  With ``midpoint=True`` each flow vector is
    attached to the midpoint of its track instead of its start, which pairs it
    with the state at the middle of the frame interval.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    prev = as_gray(prev)
    next = as_gray(next)
    if prev.shape != next.shape:
        raise ValueError("frames must have the same size")
    if prev_pyr is None:
        prev_pyr = build_pyramid(prev, params.pyramid_levels)
    if next_pyr is None:
        next_pyr = build_pyramid(next, params.pyramid_levels)
    grads = [image_gradients(lev) for lev in prev_pyr]
    feats = shi_tomasi_detect(prev, params, border=int(math.ceil(0.5 * params.window)),
                              grads=grads[0])
    tr = lk_track(prev_pyr, next_pyr, feats, params, prev_grads=grads)
    start = feats.positions[tr.status]
    end = tr.positions[tr.status]
    anchor = 0.5 * (start + end) if midpoint else start
    h, w = prev.shape
    if K is None:
        K = CameraIntrinsics(1.0, 1.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h)
    return FlowField(raster_to_pixel(anchor, K).reshape(-1, 2), (end - start) / dt)
