"""Pure-numpy implementations of the hot kernels.

Selected at import time when the compiled extension is unavailable (or
when SEMSAFE_FORCE_FALLBACK is set). The math mirrors the Cython kernel
operation-for-operation so both backends agree to floating-point noise.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from semsafe._kernel.tables import KIND_EXCLUSION, KIND_KINEMATIC, MarginTables

BACKEND = "python"

TWO_PI = 2.0 * math.pi


def _wrap_vec(theta: np.ndarray) -> np.ndarray:
    m = np.fmod(theta + np.pi, TWO_PI)
    m = np.where(m <= 0.0, m + TWO_PI, m)
    return m - np.pi


def _bilinear_vec(grid: np.ndarray, px, py, resolution: float) -> np.ndarray:
    """Edge-clamped bilinear sample of a cell-centered grid at world coords."""
    h, w = grid.shape
    gx = np.clip(px / resolution - 0.5, 0.0, w - 1.0)
    gy = np.clip(py / resolution - 0.5, 0.0, h - 1.0)
    ix = np.minimum(gx.astype(np.int64), w - 2)
    iy = np.minimum(gy.astype(np.int64), h - 2)
    fx = gx - ix
    fy = gy - iy
    top = (1.0 - fx) * grid[iy, ix] + fx * grid[iy, ix + 1]
    bot = (1.0 - fx) * grid[iy + 1, ix] + fx * grid[iy + 1, ix + 1]
    return (1.0 - fy) * top + fy * bot


def margin_at(tables: MarginTables, px, py, v, omega) -> np.ndarray:
    """Combined margin l(x, u) evaluated elementwise over array inputs."""
    px = np.atleast_1d(np.asarray(px, dtype=np.float64))
    py = np.atleast_1d(np.asarray(py, dtype=np.float64))
    v = np.broadcast_to(np.asarray(v, dtype=np.float64), px.shape)
    omega = np.broadcast_to(np.asarray(omega, dtype=np.float64), px.shape)
    m = _bilinear_vec(tables.grids[0], px, py, tables.resolution)
    for c in range(tables.n_constraints):
        kind = tables.kinds[c]
        if kind == KIND_EXCLUSION:
            li = _bilinear_vec(tables.grids[tables.grid_idx[c]], px, py, tables.resolution)
            li = li - tables.buffers[c]
        else:
            kin = np.full(px.shape, np.inf)
            if np.isfinite(tables.v_lims[c]):
                kin = np.minimum(kin, tables.ts * (tables.v_lims[c] - v))
            if np.isfinite(tables.w_lims[c]):
                kin = np.minimum(kin, tables.lever * (tables.w_lims[c] - np.abs(omega)))
            if kind == KIND_KINEMATIC:
                li = kin - tables.buffers[c]
            else:
                sd = _bilinear_vec(tables.grids[tables.grid_idx[c]], px, py, tables.resolution)
                li = np.maximum(sd - tables.buffers[c], kin)
        m = np.minimum(m, li)
    return m


def margin_scalar(tables: MarginTables, px: float, py: float, v: float, omega: float) -> float:
    return float(margin_at(tables, px, py, v, omega)[0])


def margin_field(tables: MarginTables, v: float = 0.0, omega: float = 0.0) -> np.ndarray:
    """Margin at every cell center (used by the planner's free-space grid)."""
    h, w = tables.grids.shape[1:]
    res = tables.resolution
    xs = (np.arange(w) + 0.5) * res
    ys = (np.arange(h) + 0.5) * res
    gx, gy = np.meshgrid(xs, ys)
    return margin_at(tables, gx.ravel(), gy.ravel(), v, omega).reshape(h, w)


def rollout_min_margins(
    x0: tuple[float, float, float, float],
    controls: np.ndarray,
    dt: float,
    v_max: float,
    tables: MarginTables,
) -> np.ndarray:
    """Score J[n] = min_h l(x_h, u_h) for a batch of control sequences.

    controls is (N, H, 2) with channels (omega, accel), already projected
    into the admissible set. Stage h margins use the stage-h control; the
    terminal state is scored with zero control.
    """
    controls = np.asarray(controls, dtype=np.float64)
    n, horizon, _ = controls.shape
    px = np.full(n, x0[0])
    py = np.full(n, x0[1])
    th = np.full(n, x0[2])
    v = np.full(n, x0[3])
    scores = np.full(n, np.inf)
    for h in range(horizon):
        om = controls[:, h, 0]
        ac = controls[:, h, 1]
        scores = np.minimum(scores, margin_at(tables, px, py, v, om))
        px = px + v * np.cos(th) * dt
        py = py + v * np.sin(th) * dt
        th = _wrap_vec(th + om * dt)
        v = np.clip(v + ac * dt, 0.0, v_max)
    scores = np.minimum(scores, margin_at(tables, px, py, v, np.zeros(n)))
    return scores


def raycast(
    occ_idx: np.ndarray,
    px: float,
    py: float,
    bearings: np.ndarray,
    r_max: float,
    resolution: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Grid ray cast (Amanatides-Woo traversal), vectorized across rays.

    occ_idx holds the object index per cell (-1 for free). Returns per-ray
    (range, hit_index); misses report (r_max, -1). Hit ranges are the
    midpoint of the ray's chord through the first occupied cell, so a hit
    lies strictly inside that cell and within half a cell of its boundary.
    """
    occ_idx = np.asarray(occ_idx)
    h, w = occ_idx.shape
    bearings = np.asarray(bearings, dtype=np.float64)
    k = bearings.shape[0]
    ranges = np.full(k, r_max)
    hits = np.full(k, -1, dtype=np.int32)

    ix0 = int(math.floor(px / resolution))
    iy0 = int(math.floor(py / resolution))
    if not (0 <= ix0 < w and 0 <= iy0 < h):
        return ranges, hits

    dx = np.cos(bearings)
    dy = np.sin(bearings)
    step_x = np.where(dx > 0.0, 1, -1).astype(np.int64)
    step_y = np.where(dy > 0.0, 1, -1).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tdx = np.where(dx != 0.0, resolution / np.abs(dx), np.inf)
        tdy = np.where(dy != 0.0, resolution / np.abs(dy), np.inf)
        fx = px / resolution - ix0
        fy = py / resolution - iy0
        tmx = np.where(dx > 0.0, (1.0 - fx) * tdx, fx * tdx)
        tmy = np.where(dy > 0.0, (1.0 - fy) * tdy, fy * tdy)
    tmx = np.where(np.isfinite(tdx), tmx, np.inf)
    tmy = np.where(np.isfinite(tdy), tmy, np.inf)

    here = int(occ_idx[iy0, ix0])
    if here >= 0:
        exit_t = np.minimum(tmx, tmy)
        ranges = np.minimum(0.5 * exit_t, r_max)
        hits[:] = here
        return ranges, hits

    ix = np.full(k, ix0, dtype=np.int64)
    iy = np.full(k, iy0, dtype=np.int64)
    active = np.ones(k, dtype=bool)
    while active.any():
        use_x = tmx <= tmy
        t_enter = np.where(use_x, tmx, tmy)
        ix = ix + np.where(use_x, step_x, 0)
        iy = iy + np.where(use_x, 0, step_y)
        tmx = tmx + np.where(use_x, tdx, 0.0)
        tmy = tmy + np.where(use_x, 0.0, tdy)
        out = (ix < 0) | (ix >= w) | (iy < 0) | (iy >= h) | (t_enter > r_max)
        active &= ~out
        if not active.any():
            break
        cell = occ_idx[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
        hit = active & (cell >= 0)
        if hit.any():
            t_exit = np.minimum(tmx, tmy)
            rng = np.minimum(0.5 * (t_enter + t_exit), r_max)
            ranges[hit] = rng[hit]
            hits[hit] = cell[hit]
            active &= ~hit
    return ranges, hits


def sdf_from_mask(mask: np.ndarray, resolution: float) -> np.ndarray:
    """Euclidean distance (meters) to the nearest occupied cell center.

    Exact transform; zero on occupied cells. Callers handle the all-free
    sentinel case before calling.
    """
    mask = np.asarray(mask, dtype=bool)
    return ndimage.distance_transform_edt(~mask, sampling=resolution).astype(np.float64)
