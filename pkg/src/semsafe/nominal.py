"""Safety-agnostic task policy: A* shortest paths tracked by pure pursuit.

The planner runs on the margin field of whatever failure-set view it is
given (so it can be semantics-aware or geometric-only); the tracker is a
plain PD law with no safety handling whatsoever. Grid costs are kept as
(straight, diagonal) step counts so path costs are exact, not accumulated
floats.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from semsafe.core import Control, DynamicsParams, RobotState, clamp_control, wrap_angle
from semsafe.grounding import FailureSetView

SQRT2 = math.sqrt(2.0)

_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class PdGains:
    k_heading: float = 2.0
    k_vel: float = 2.0
    cruise_speed: float = 1.5
    k_heading_d: float = 0.3
    lookahead: float = 0.5

    def __post_init__(self) -> None:
        if min(self.k_heading, self.k_vel, self.cruise_speed) <= 0.0:
            raise ValueError("gains must be positive")


@dataclass(frozen=True)
class PlanPath:
    waypoints: np.ndarray      # (M, 2) meters, cell centers, 8-connected
    cost: float                # straight*res + diag*res*sqrt(2), exact
    goal: tuple[float, float]
    goal_radius: float
    stamp: int = 0


@dataclass
class TrackerMemory:
    prev_err: float = 0.0
    has_prev: bool = False


def astar_grid(
    free: np.ndarray,
    start: tuple[int, int],
    goal_set: np.ndarray,
    resolution: float,
    heuristic_to: tuple[float, float] | None = None,
    heuristic_slack: float = 0.0,
) -> tuple[float, list[tuple[int, int]]] | None:
    """8-connected A* over a boolean free grid.

    goal_set is a boolean grid of acceptable terminal cells. Returns
    (cost, cell path) or None when unreachable. Ties in f break toward the
    lower flat cell index, making expansion order deterministic.
    """
    h, w = free.shape
    sy, sx = start
    if not (0 <= sy < h and 0 <= sx < w) or not free[sy, sx]:
        return None
    if not goal_set.any():
        return None
    if heuristic_to is None:
        gy, gx = np.nonzero(goal_set)
        heuristic_to = ((float(gx.mean()) + 0.5) * resolution,
                        (float(gy.mean()) + 0.5) * resolution)
        heuristic_slack = max(
            heuristic_slack,
            float(np.hypot((gx - gx.mean()), (gy - gy.mean())).max()) * resolution,
        )
    hx, hy = heuristic_to

    def _heur(iy: int, ix: int) -> float:
        cx = (ix + 0.5) * resolution
        cy = (iy + 0.5) * resolution
        return max(0.0, math.hypot(cx - hx, cy - hy) - heuristic_slack)

    diag = resolution * SQRT2
    g_straight = np.full((h, w), -1, dtype=np.int32)
    g_diag = np.full((h, w), -1, dtype=np.int32)
    parent = np.full((h, w), -1, dtype=np.int64)
    closed = np.zeros((h, w), dtype=bool)
    g_straight[sy, sx] = 0
    g_diag[sy, sx] = 0
    heap: list[tuple[float, int]] = [(_heur(sy, sx), sy * w + sx)]
    while heap:
        _, idx = heapq.heappop(heap)
        iy, ix = divmod(idx, w)
        if closed[iy, ix]:
            continue
        closed[iy, ix] = True
        if goal_set[iy, ix]:
            cells = [(iy, ix)]
            while parent[iy, ix] >= 0:
                iy, ix = divmod(int(parent[iy, ix]), w)
                cells.append((iy, ix))
            cells.reverse()
            cost = g_straight[cells[-1]] * resolution + g_diag[cells[-1]] * diag
            return float(cost), cells
        g_here = g_straight[iy, ix] * resolution + g_diag[iy, ix] * diag
        for dy, dx in _NEIGHBORS:
            ny, nx = iy + dy, ix + dx
            if not (0 <= ny < h and 0 <= nx < w) or closed[ny, nx] or not free[ny, nx]:
                continue
            ns = g_straight[iy, ix] + (1 if dy == 0 or dx == 0 else 0)
            nd = g_diag[iy, ix] + (1 if dy != 0 and dx != 0 else 0)
            g_new = ns * resolution + nd * diag
            if g_straight[ny, nx] >= 0:
                g_old = g_straight[ny, nx] * resolution + g_diag[ny, nx] * diag
                if g_new >= g_old:
                    continue
            g_straight[ny, nx] = ns
            g_diag[ny, nx] = nd
            parent[ny, nx] = idx
            heapq.heappush(heap, (g_new + _heur(ny, nx), ny * w + nx))
        del g_here
    return None


def _nearest_free(free: np.ndarray, cell: tuple[int, int], max_radius_cells: int = 12):
    h, w = free.shape
    cy, cx = cell
    if 0 <= cy < h and 0 <= cx < w and free[cy, cx]:
        return cell
    best = None
    best_key = None
    for dy in range(-max_radius_cells, max_radius_cells + 1):
        for dx in range(-max_radius_cells, max_radius_cells + 1):
            ny, nx = cy + dy, cx + dx
            if 0 <= ny < h and 0 <= nx < w and free[ny, nx]:
                key = (dy * dy + dx * dx, ny * w + nx)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (ny, nx)
    return best


def plan(
    view: FailureSetView,
    start: tuple[float, float],
    goal: tuple[float, float],
    goal_radius: float = 0.4,
    stamp: int = 0,
    clearance: float = 0.0,
) -> PlanPath | None:
    """Shortest 8-connected path over the view's zero-velocity free space.

    Cells are free when the combined margin at rest exceeds the requested
    clearance (zero reproduces the bare free space; the harness passes the
    robot radius plus tracking slack so paths keep room for the filter).
    Exclusion zones and the inflated base map block; velocity-only
    constraints never do. Returns None when the goal is unreachable.
    """
    field = view.margin_field()
    free = field > clearance
    res = view.base_sdf.resolution
    h, w = free.shape
    start_cell = _nearest_free(free, (int(start[1] / res), int(start[0] / res)))
    if start_cell is None:
        return None
    ys = (np.arange(h) + 0.5) * res
    xs = (np.arange(w) + 0.5) * res
    dist = np.hypot(ys[:, None] - goal[1], xs[None, :] - goal[0])
    goal_set = free & (dist <= goal_radius)
    result = astar_grid(
        free, start_cell, goal_set, res,
        heuristic_to=goal, heuristic_slack=goal_radius + res,
    )
    if result is None:
        return None
    cost, cells = result
    pts = np.array([[(ix + 0.5) * res, (iy + 0.5) * res] for iy, ix in cells])
    pts.setflags(write=False)
    return PlanPath(waypoints=pts, cost=cost, goal=goal, goal_radius=goal_radius, stamp=stamp)


def track(
    path: PlanPath,
    x: RobotState,
    gains: PdGains,
    dyn: DynamicsParams,
    memory: TrackerMemory | None = None,
) -> Control:
    """Pure pursuit of a lookahead point with PD heading and P velocity.

    Commands full braking once the robot is inside the goal disc. No
    safety reasoning: the tracker will happily drive at whatever the path
    and cruise speed ask for.
    """
    wp = path.waypoints
    if wp.shape[0] == 0:
        raise ValueError("empty path")
    if math.hypot(x.px - path.goal[0], x.py - path.goal[1]) <= path.goal_radius:
        return clamp_control(Control(0.0, -dyn.accel_max), dyn)
    d = np.hypot(wp[:, 0] - x.px, wp[:, 1] - x.py)
    nearest = int(np.argmin(d))
    target = wp[-1]
    acc = 0.0
    for i in range(nearest + 1, wp.shape[0]):
        acc += float(np.hypot(*(wp[i] - wp[i - 1])))
        if acc >= gains.lookahead:
            target = wp[i]
            break
    err = wrap_angle(math.atan2(target[1] - x.py, target[0] - x.px) - x.theta)
    d_term = 0.0
    if memory is not None:
        if memory.has_prev:
            d_term = gains.k_heading_d * (err - memory.prev_err) / dyn.dt
        memory.prev_err = err
        memory.has_prev = True
    omega = gains.k_heading * err + d_term
    accel = gains.k_vel * (gains.cruise_speed - x.v)
    return clamp_control(Control(omega, accel), dyn)
