import math

import numpy as np
import pytest

from semsafe.core import Control, DynamicsParams, RobotState
from semsafe.grounding import GroundingParams, SdfGrid, build_view
from semsafe.nominal import PdGains, TrackerMemory, astar_grid, plan, track

from .conftest import dijkstra_oracle


def _view_from_free(free: np.ndarray, resolution: float):
    # margin +resolution inside free space, -resolution on blocked cells
    values = np.where(free, resolution, -resolution).astype(float)
    base = SdfGrid(values=values, resolution=resolution, stamp=0)
    return build_view(base, [], GroundingParams())


def test_astar_matches_dijkstra_on_random_grids(rng):
    res = 0.1
    for _ in range(30):
        h, w = int(rng.integers(6, 32)), int(rng.integers(6, 32))
        free = rng.random((h, w)) > 0.25
        start = (int(rng.integers(h)), int(rng.integers(w)))
        goal = (int(rng.integers(h)), int(rng.integers(w)))
        free[start] = True
        free[goal] = True
        goal_set = np.zeros((h, w), dtype=bool)
        goal_set[goal] = True
        got = astar_grid(free, start, goal_set, res,
                         heuristic_to=((goal[1] + 0.5) * res, (goal[0] + 0.5) * res))
        want = dijkstra_oracle(free, start, goal_set, res)
        if want is None:
            assert got is None
        else:
            assert got is not None
            assert got[0] == want  # exact: same (straight, diagonal) count cost


def test_astar_unreachable_returns_none():
    free = np.ones((10, 10), dtype=bool)
    free[:, 5] = False
    goal_set = np.zeros((10, 10), dtype=bool)
    goal_set[5, 8] = True
    assert astar_grid(free, (5, 1), goal_set, 0.1) is None


def test_plan_empty_room_is_near_straight():
    free = np.ones((50, 80), dtype=bool)
    view = _view_from_free(free, 0.1)
    path = plan(view, (0.55, 2.55), (7.55, 2.55), goal_radius=0.15)
    assert path is not None
    euclid = 7.0
    assert path.cost <= euclid * math.sqrt(2.0) + 0.2
    assert path.cost >= euclid - 0.2 - 2 * 0.15
    # consecutive waypoints are 8-connected neighbours
    diffs = np.abs(np.diff(path.waypoints, axis=0))
    assert np.all(diffs <= 0.1 + 1e-9)
    assert np.all(diffs.sum(axis=1) > 0)


def test_plan_blocked_corridor_unreachable():
    free = np.ones((30, 30), dtype=bool)
    free[:, 15] = False
    view = _view_from_free(free, 0.1)
    assert plan(view, (0.55, 1.55), (2.85, 1.55), goal_radius=0.1) is None


def test_plan_respects_clearance_threshold():
    values = np.full((30, 60), 1.0)
    values[:, 28:32] = 0.2  # a low-margin band, passable only without slack
    base = SdfGrid(values=values, resolution=0.1, stamp=0)
    view = build_view(base, [], GroundingParams())
    assert plan(view, (0.55, 1.55), (5.55, 1.55), clearance=0.5) is None
    assert plan(view, (0.55, 1.55), (5.55, 1.55), clearance=0.0) is not None


def test_track_on_path_at_cruise_is_nearly_zero():
    wp = np.array([[x, 1.0] for x in np.arange(0.0, 5.0, 0.1)])
    from semsafe.nominal import PlanPath

    path = PlanPath(waypoints=wp, cost=5.0, goal=(5.0, 1.0), goal_radius=0.3)
    gains = PdGains(cruise_speed=1.0)
    u = track(path, RobotState(1.0, 1.0, 0.0, 1.0), gains, DynamicsParams())
    assert u.omega == pytest.approx(0.0, abs=1e-9)
    assert u.accel == pytest.approx(0.0, abs=1e-9)


def test_track_turns_hard_toward_path():
    wp = np.array([[x, 1.0] for x in np.arange(0.0, 5.0, 0.1)])
    from semsafe.nominal import PlanPath

    path = PlanPath(waypoints=wp, cost=5.0, goal=(5.0, 1.0), goal_radius=0.3)
    dyn = DynamicsParams()
    u = track(path, RobotState(1.0, 1.0, math.pi / 2, 0.5), PdGains(), dyn)
    assert abs(u.omega) == dyn.omega_max  # 90 degrees of error saturates omega
    assert u.omega < 0


def test_track_brakes_inside_goal_disc():
    wp = np.array([[0.0, 0.0], [0.1, 0.0]])
    from semsafe.nominal import PlanPath

    path = PlanPath(waypoints=wp, cost=0.1, goal=(0.1, 0.0), goal_radius=0.5)
    dyn = DynamicsParams()
    u = track(path, RobotState(0.0, 0.0, 0.0, 1.0), PdGains(), dyn)
    assert u.accel == -dyn.accel_max


def test_track_outputs_always_clamped(rng, dyn):
    wp = np.array([[x, 2.0] for x in np.arange(0.0, 6.0, 0.1)])
    from semsafe.nominal import PlanPath

    path = PlanPath(waypoints=wp, cost=6.0, goal=(6.0, 2.0), goal_radius=0.2)
    mem = TrackerMemory()
    for _ in range(100):
        s = RobotState(float(rng.uniform(0, 6)), float(rng.uniform(0, 4)),
                       float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(0, 1.5)))
        u = track(path, s, PdGains(), dyn, mem)
        assert abs(u.omega) <= dyn.omega_max
        assert abs(u.accel) <= dyn.accel_max


def test_nominal_stack_reaches_goal_in_open_room():
    from semsafe.episode import run_episode
    from semsafe.harness import load_scenario

    rec = run_episode(load_scenario("open_room"), "lr", 0)
    assert rec.outcome == "success"
    assert rec.final_t < 35.0
    assert all(r.mode == "nominal" for r in rec.rows)
