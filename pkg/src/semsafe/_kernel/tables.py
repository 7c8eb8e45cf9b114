"""Packed margin-evaluation tables shared by both kernel backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Constraint kind codes used throughout the kernels.
KIND_EXCLUSION = 0
KIND_KINEMATIC = 1
KIND_HYBRID = 2


@dataclass(frozen=True)
class MarginTables:
    """Flat arrays describing the combined margin function l(x, u).

    grids[0] is the base clearance field (meters, bilinear-sampled at the
    robot position); grids[1:] are per-constraint distance fields. Velocity
    margins are scaled by ts (seconds) and angular margins by lever (meters)
    so every term is meters-equivalent and the min/max compositions compare
    like quantities.
    """

    grids: np.ndarray      # (G, H, W) float64, C-contiguous
    kinds: np.ndarray      # (C,) int8
    grid_idx: np.ndarray   # (C,) int32, -1 when the constraint has no spatial part
    buffers: np.ndarray    # (C,) float64 meters
    v_lims: np.ndarray     # (C,) float64 m/s, +inf when unset
    w_lims: np.ndarray     # (C,) float64 rad/s, +inf when unset
    resolution: float
    ts: float = 1.0
    lever: float = 0.25

    def __post_init__(self) -> None:
        if self.grids.ndim != 3 or self.grids.shape[1] < 2 or self.grids.shape[2] < 2:
            raise ValueError("grids must be (G, H, W) with H, W >= 2")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")

    @property
    def n_constraints(self) -> int:
        return int(self.kinds.shape[0])


def make_tables(
    base_grid: np.ndarray,
    resolution: float,
    constraints: list[tuple[int, np.ndarray | None, float, float, float]] = (),
    ts: float = 1.0,
    lever: float = 0.25,
) -> MarginTables:
    """Pack a base field and (kind, grid, buffer, v_lim, w_lim) tuples."""
    grids = [np.ascontiguousarray(base_grid, dtype=np.float64)]
    kinds, idx, buffers, v_lims, w_lims = [], [], [], [], []
    for kind, grid, buf, v_lim, w_lim in constraints:
        if grid is None:
            idx.append(-1)
        else:
            idx.append(len(grids))
            grids.append(np.ascontiguousarray(grid, dtype=np.float64))
        kinds.append(kind)
        buffers.append(buf)
        v_lims.append(v_lim if v_lim is not None else np.inf)
        w_lims.append(w_lim if w_lim is not None else np.inf)
    return MarginTables(
        grids=np.ascontiguousarray(np.stack(grids, axis=0)),
        kinds=np.asarray(kinds, dtype=np.int8),
        grid_idx=np.asarray(idx, dtype=np.int32),
        buffers=np.asarray(buffers, dtype=np.float64),
        v_lims=np.asarray(v_lims, dtype=np.float64),
        w_lims=np.asarray(w_lims, dtype=np.float64),
        resolution=float(resolution),
        ts=float(ts),
        lever=float(lever),
    )
