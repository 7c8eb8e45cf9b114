import numpy as np
import pytest

from semsafe.core import DynamicsParams


@pytest.fixture
def dyn() -> DynamicsParams:
    return DynamicsParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def reference_step(state, control, p):
    """Independent hand-written discrete-dynamics reference.

    Kept deliberately separate from the library implementation: position
    advances with the pre-update velocity, then heading integrates and
    wraps to (-pi, pi], then speed integrates and clamps to [0, v_max].
    """
    import math

    px, py, theta, v = state
    omega = max(-p.omega_max, min(p.omega_max, control[0]))
    accel = max(-p.accel_max, min(p.accel_max, control[1]))
    nx = px + v * math.cos(theta) * p.dt
    ny = py + v * math.sin(theta) * p.dt
    nt = theta + omega * p.dt
    while nt > math.pi:
        nt -= 2.0 * math.pi
    while nt <= -math.pi:
        nt += 2.0 * math.pi
    nv = v + accel * p.dt
    nv = max(0.0, min(p.v_max, nv))
    return (nx, ny, nt, nv)


def brute_force_signed_distance(mask: np.ndarray, resolution: float) -> np.ndarray:
    """O(n^2) oracle for the signed clearance field convention.

    Outside: distance to the nearest occupied cell center. Occupied cells:
    zero on the boundary ring, negative interior depth beyond one cell
    (d_out - max(d_in - res, 0) with both transforms brute-forced).
    """
    h, w = mask.shape
    occ = np.argwhere(mask)
    free = np.argwhere(~mask)
    yy, xx = np.mgrid[0:h, 0:w]
    if len(occ) == 0:
        raise ValueError("empty mask has no brute-force distance")
    d_out = np.sqrt(
        ((yy[..., None] - occ[:, 0]) ** 2 + (xx[..., None] - occ[:, 1]) ** 2).min(axis=-1)
    ) * resolution
    if len(free) == 0:
        d_in = np.full((h, w), 1e6)
    else:
        d_in = np.sqrt(
            ((yy[..., None] - free[:, 0]) ** 2 + (xx[..., None] - free[:, 1]) ** 2).min(axis=-1)
        ) * resolution
    return d_out - np.maximum(d_in - resolution, 0.0)


def dijkstra_oracle(free: np.ndarray, start: tuple[int, int], goal_set: np.ndarray,
                    resolution: float):
    """Plain Dijkstra over the 8-connected grid with exact step counting."""
    import heapq
    import math

    h, w = free.shape
    diag = resolution * math.sqrt(2.0)
    best = {}
    heap = [(0.0, start[0] * w + start[1], 0, 0)]
    seen = set()
    while heap:
        g, idx, s_cnt, d_cnt = heapq.heappop(heap)
        if idx in seen:
            continue
        seen.add(idx)
        iy, ix = divmod(idx, w)
        if goal_set[iy, ix]:
            return s_cnt * resolution + d_cnt * diag
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                ny, nx = iy + dy, ix + dx
                if not (0 <= ny < h and 0 <= nx < w) or not free[ny, nx]:
                    continue
                nidx = ny * w + nx
                if nidx in seen:
                    continue
                ns = s_cnt + (1 if dy == 0 or dx == 0 else 0)
                nd = d_cnt + (1 if dy != 0 and dx != 0 else 0)
                ng = ns * resolution + nd * diag
                if nidx not in best or ng < best[nidx]:
                    best[nidx] = ng
                    heapq.heappush(heap, (ng, nidx, ns, nd))
    return None
