# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched rollout scoring, ray casting, distance transform.

Mirrors semsafe._kernel.fallback operation-for-operation; the parity tests
hold both backends to the same outputs.
"""

from libc.math cimport INFINITY, M_PI, cos, fabs, fmod, sin, sqrt

import numpy as np

BACKEND = "compiled"

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _wrap(double theta) nogil:
    cdef double m = fmod(theta + M_PI, TWO_PI)
    if m <= 0.0:
        m += TWO_PI
    return m - M_PI


cdef inline double _bilinear(const double[:, :, ::1] grids, int g,
                             double px, double py, double res) nogil:
    cdef int h = <int>grids.shape[1]
    cdef int w = <int>grids.shape[2]
    cdef double gx = px / res - 0.5
    cdef double gy = py / res - 0.5
    cdef int ix, iy
    cdef double fx, fy, top, bot
    if gx < 0.0:
        gx = 0.0
    elif gx > w - 1.0:
        gx = w - 1.0
    if gy < 0.0:
        gy = 0.0
    elif gy > h - 1.0:
        gy = h - 1.0
    ix = <int>gx
    iy = <int>gy
    if ix > w - 2:
        ix = w - 2
    if iy > h - 2:
        iy = h - 2
    fx = gx - ix
    fy = gy - iy
    top = (1.0 - fx) * grids[g, iy, ix] + fx * grids[g, iy, ix + 1]
    bot = (1.0 - fx) * grids[g, iy + 1, ix] + fx * grids[g, iy + 1, ix + 1]
    return (1.0 - fy) * top + fy * bot


cdef inline double _margin(const double[:, :, ::1] grids,
                           const signed char[::1] kinds,
                           const int[::1] gidx,
                           const double[::1] bufs,
                           const double[::1] vlims,
                           const double[::1] wlims,
                           double ts, double lever, double res,
                           double px, double py, double v, double omega) nogil:
    cdef double m = _bilinear(grids, 0, px, py, res)
    cdef double li, kin, sd
    cdef int c
    cdef int nc = <int>kinds.shape[0]
    for c in range(nc):
        if kinds[c] == 0:
            li = _bilinear(grids, gidx[c], px, py, res) - bufs[c]
        else:
            kin = INFINITY
            if vlims[c] != INFINITY:
                kin = ts * (vlims[c] - v)
            if wlims[c] != INFINITY:
                li = lever * (wlims[c] - fabs(omega))
                if li < kin:
                    kin = li
            if kinds[c] == 1:
                li = kin - bufs[c]
            else:
                sd = _bilinear(grids, gidx[c], px, py, res) - bufs[c]
                li = sd if sd > kin else kin
        if li < m:
            m = li
    return m


def rollout_min_margins(x0, controls, double dt, double v_max, tables):
    """J[n] = min over h of l(x_h, u_h) along each rolled-out sequence."""
    ctrl_arr = np.ascontiguousarray(controls, dtype=np.float64)
    cdef const double[:, :, ::1] ctrl = ctrl_arr
    cdef const double[:, :, ::1] grids = tables.grids
    cdef const signed char[::1] kinds = tables.kinds
    cdef const int[::1] gidx = tables.grid_idx
    cdef const double[::1] bufs = tables.buffers
    cdef const double[::1] vlims = tables.v_lims
    cdef const double[::1] wlims = tables.w_lims
    cdef double ts = tables.ts
    cdef double lever = tables.lever
    cdef double res = tables.resolution
    cdef double px0 = x0[0], py0 = x0[1], th0 = x0[2], v0 = x0[3]
    cdef int n = <int>ctrl.shape[0]
    cdef int horizon = <int>ctrl.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] scores = out
    cdef int i, h
    cdef double px, py, th, v, om, ac, j, m
    with nogil:
        for i in range(n):
            px = px0
            py = py0
            th = th0
            v = v0
            j = INFINITY
            for h in range(horizon):
                om = ctrl[i, h, 0]
                ac = ctrl[i, h, 1]
                m = _margin(grids, kinds, gidx, bufs, vlims, wlims,
                            ts, lever, res, px, py, v, om)
                if m < j:
                    j = m
                px = px + v * cos(th) * dt
                py = py + v * sin(th) * dt
                th = _wrap(th + om * dt)
                v = v + ac * dt
                if v < 0.0:
                    v = 0.0
                elif v > v_max:
                    v = v_max
            m = _margin(grids, kinds, gidx, bufs, vlims, wlims,
                        ts, lever, res, px, py, v, 0.0)
            if m < j:
                j = m
            scores[i] = j
    return out


def raycast(occ_idx, double px, double py, bearings, double r_max, double resolution):
    """Amanatides-Woo grid traversal; ranges are mid-chord through the hit cell."""
    occ_arr = np.ascontiguousarray(occ_idx, dtype=np.int16)
    cdef const short[:, ::1] occ = occ_arr
    b_arr = np.ascontiguousarray(bearings, dtype=np.float64)
    cdef const double[::1] bear = b_arr
    cdef int h = <int>occ.shape[0]
    cdef int w = <int>occ.shape[1]
    cdef int k = <int>bear.shape[0]
    ranges_out = np.full(k, r_max, dtype=np.float64)
    hits_out = np.full(k, -1, dtype=np.int32)
    cdef double[::1] ranges = ranges_out
    cdef int[::1] hits = hits_out
    cdef int ix0 = <int>(px / resolution)
    cdef int iy0 = <int>(py / resolution)
    if px < 0.0:
        ix0 -= 1
    if py < 0.0:
        iy0 -= 1
    if ix0 < 0 or ix0 >= w or iy0 < 0 or iy0 >= h:
        return ranges_out, hits_out

    cdef short here = occ[iy0, ix0]
    cdef int r, ix, iy, step_x, step_y
    cdef double dx, dy, tdx, tdy, tmx, tmy, fx, fy, t_enter, t_exit, rng
    fx = px / resolution - ix0
    fy = py / resolution - iy0
    for r in range(k):
        dx = cos(bear[r])
        dy = sin(bear[r])
        step_x = 1 if dx > 0.0 else -1
        step_y = 1 if dy > 0.0 else -1
        tdx = resolution / fabs(dx) if dx != 0.0 else INFINITY
        tdy = resolution / fabs(dy) if dy != 0.0 else INFINITY
        if tdx == INFINITY:
            tmx = INFINITY
        else:
            tmx = (1.0 - fx) * tdx if dx > 0.0 else fx * tdx
        if tdy == INFINITY:
            tmy = INFINITY
        else:
            tmy = (1.0 - fy) * tdy if dy > 0.0 else fy * tdy
        if here >= 0:
            t_exit = tmx if tmx < tmy else tmy
            rng = 0.5 * t_exit
            ranges[r] = rng if rng < r_max else r_max
            hits[r] = here
            continue
        ix = ix0
        iy = iy0
        while True:
            if tmx <= tmy:
                t_enter = tmx
                ix += step_x
                tmx += tdx
            else:
                t_enter = tmy
                iy += step_y
                tmy += tdy
            if ix < 0 or ix >= w or iy < 0 or iy >= h or t_enter > r_max:
                break
            if occ[iy, ix] >= 0:
                t_exit = tmx if tmx < tmy else tmy
                rng = 0.5 * (t_enter + t_exit)
                if rng > r_max:
                    rng = r_max
                ranges[r] = rng
                hits[r] = occ[iy, ix]
                break
    return ranges_out, hits_out


cdef void _edt_1d(double* f, double* d, int* v, double* z, int n) nogil:
    cdef int q, kk = 0
    cdef double s
    v[0] = 0
    z[0] = -1e30
    z[1] = 1e30
    for q in range(1, n):
        s = ((f[q] + <double>q * q) - (f[v[kk]] + <double>v[kk] * v[kk])) / (2.0 * q - 2.0 * v[kk])
        while s <= z[kk]:
            kk -= 1
            s = ((f[q] + <double>q * q) - (f[v[kk]] + <double>v[kk] * v[kk])) / (2.0 * q - 2.0 * v[kk])
        kk += 1
        v[kk] = q
        z[kk] = s
        z[kk + 1] = 1e30
    kk = 0
    for q in range(n):
        while z[kk + 1] < q:
            kk += 1
        d[q] = (<double>(q - v[kk])) * (q - v[kk]) + f[v[kk]]


def sdf_from_mask(mask, double resolution):
    """Exact Euclidean distance (meters) to the nearest occupied cell center.

    Two-pass lower-envelope transform over squared distances; zero on
    occupied cells.
    """
    m_arr = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef const unsigned char[:, ::1] occ = m_arr
    cdef int h = <int>occ.shape[0]
    cdef int w = <int>occ.shape[1]
    cdef int n = h if h > w else w
    work_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    buf_arr = np.empty(n, dtype=np.float64)
    out1_arr = np.empty(n, dtype=np.float64)
    vbuf_arr = np.empty(n, dtype=np.int32)
    zbuf_arr = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] buf = buf_arr
    cdef double[::1] out1 = out1_arr
    cdef int[::1] vbuf = vbuf_arr
    cdef double[::1] zbuf = zbuf_arr
    cdef int i, j
    with nogil:
        for i in range(h):
            for j in range(w):
                work[i, j] = 0.0 if occ[i, j] else 1e20
        # columns
        for j in range(w):
            for i in range(h):
                buf[i] = work[i, j]
            _edt_1d(&buf[0], &out1[0], &vbuf[0], &zbuf[0], h)
            for i in range(h):
                work[i, j] = out1[i]
        # rows
        for i in range(h):
            for j in range(w):
                buf[j] = work[i, j]
            _edt_1d(&buf[0], &out1[0], &vbuf[0], &zbuf[0], w)
            for j in range(w):
                work[i, j] = sqrt(out1[j]) * resolution
    return work_arr
