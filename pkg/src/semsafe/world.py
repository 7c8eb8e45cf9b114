"""Ground-truth 2D world, scenario loading, and the semantic range sensor.

Worlds are occupancy grids built from labeled rectangles and thick
polylines. Objects flagged base_blocking=False (overhangs, floor regions)
are invisible to base collision checks but fully visible to the sensor,
which is what lets "don't go under the desk" style constraints exist at
all: the base can pass, the semantics may forbid it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from semsafe import _kernel
from semsafe.core import Control, DynamicsParams, RobotState, step


class ScenarioError(ValueError):
    """Scenario file failed validation; message carries the offending field."""

    def __init__(self, message: str, field_path: str | None = None):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


@dataclass(frozen=True)
class SensorConfig:
    n_rays: int = 180
    fov: float = 2.0 * math.pi
    r_max: float = 6.0
    sigma_r: float = 0.0
    p_drop: float = 0.0


@dataclass(frozen=True)
class WorldObject:
    id: str
    label: str
    mask: np.ndarray          # (H, W) bool footprint
    base_blocking: bool = True


@dataclass(frozen=True)
class SemanticScan:
    pose: RobotState
    bearings: np.ndarray      # (K,) radians, robot frame
    ranges: np.ndarray        # (K,) meters in (0, r_max]
    hit_ids: tuple[str | None, ...]
    hit_labels: tuple[str | None, ...]


@dataclass(frozen=True)
class NominalSettings:
    cruise: float = 1.5
    k_heading: float = 2.0
    k_heading_d: float = 0.3
    k_vel: float = 2.0
    lookahead: float = 0.5


@dataclass(frozen=True)
class World:
    name: str
    category: str
    resolution: float
    width: int                # cells
    height: int               # cells
    objects: tuple[WorldObject, ...]
    base_map: np.ndarray      # (H, W) bool, union of base-blocking footprints
    base_inflated: np.ndarray # base_map grown by the robot disc radius
    base_sdf: np.ndarray      # meters to nearest inflated-occupied cell
    occ_index: np.ndarray     # (H, W) int16 object index for sensing, -1 free
    start: RobotState
    goal: tuple[float, float]
    goal_radius: float
    robot_radius: float
    dynamics: DynamicsParams
    sensor: SensorConfig
    nominal: NominalSettings
    instructions: tuple[tuple[float, str], ...] = ()
    duration: float = 35.0

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def cell_of(self, px: float, py: float) -> tuple[int, int]:
        return (int(py / self.resolution), int(px / self.resolution))

    def in_bounds(self, px: float, py: float) -> bool:
        ex, ey = self.extent
        return 0.0 <= px < ex and 0.0 <= py < ey

    def true_mask_for(self, matcher) -> np.ndarray:
        """Union footprint of objects whose label satisfies matcher(label)."""
        out = np.zeros((self.height, self.width), dtype=bool)
        for obj in self.objects:
            if matcher(obj.label):
                out |= obj.mask
        return out


def _cell_centers(n: int, resolution: float) -> np.ndarray:
    return (np.arange(n) + 0.5) * resolution


def _rasterize_rect(shape, h, w, resolution, fpath) -> np.ndarray:
    try:
        x, y = float(shape["xy"][0]), float(shape["xy"][1])
        sw, sh = float(shape["wh"][0]), float(shape["wh"][1])
    except (KeyError, IndexError, TypeError) as exc:
        raise ScenarioError(f"rect needs xy and wh ({exc})", fpath)
    xs = _cell_centers(w, resolution)
    ys = _cell_centers(h, resolution)
    return ((ys >= y) & (ys < y + sh))[:, None] & ((xs >= x) & (xs < x + sw))[None, :]


def _rasterize_poly(shape, h, w, resolution, fpath) -> np.ndarray:
    try:
        pts = np.asarray(shape["points"], dtype=float)
        half = float(shape.get("width", 2 * resolution)) / 2.0
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"poly needs points ({exc})", fpath)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ScenarioError("poly points must be a list of [x, y] pairs", fpath)
    xs = _cell_centers(w, resolution)
    ys = _cell_centers(h, resolution)
    gx, gy = np.meshgrid(xs, ys)
    mask = np.zeros((h, w), dtype=bool)
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        dx, dy = x1 - x0, y1 - y0
        norm2 = dx * dx + dy * dy
        if norm2 == 0.0:
            dist = np.hypot(gx - x0, gy - y0)
        else:
            t = np.clip(((gx - x0) * dx + (gy - y0) * dy) / norm2, 0.0, 1.0)
            dist = np.hypot(gx - (x0 + t * dx), gy - (y0 + t * dy))
        mask |= dist <= half
    return mask


def load_world(path: str | Path) -> World:
    """Load and validate a scenario file into an immutable World."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}")
    return world_from_dict(data, name=data.get("name", path.stem))


def world_from_dict(data: dict, name: str = "scenario") -> World:
    resolution = float(data.get("resolution", 0.05))
    if resolution <= 0:
        raise ScenarioError("must be > 0", "resolution")
    try:
        size = data["size_m"]
        ex, ey = float(size[0]), float(size[1])
    except (KeyError, IndexError, TypeError):
        raise ScenarioError("size_m must be [width_m, height_m]", "size_m")
    w = int(round(ex / resolution))
    h = int(round(ey / resolution))
    if w < 4 or h < 4:
        raise ScenarioError("world too small", "size_m")

    dyn_raw = data.get("dynamics", {})
    dynamics = DynamicsParams(
        dt=float(dyn_raw.get("dt", 0.05)),
        v_max=float(dyn_raw.get("v_max", 1.5)),
        omega_max=float(dyn_raw.get("omega_max", 1.0)),
        accel_max=float(dyn_raw.get("accel_max", 3.0)),
    )
    sens_raw = data.get("sensor", {})
    sensor = SensorConfig(
        n_rays=int(sens_raw.get("rays", 180)),
        fov=math.radians(float(sens_raw.get("fov_deg", 360.0))),
        r_max=float(sens_raw.get("range_m", 6.0)),
        sigma_r=float(sens_raw.get("sigma_r", 0.0)),
        p_drop=float(sens_raw.get("p_drop", 0.0)),
    )
    nom_raw = data.get("nominal", {})
    nominal = NominalSettings(
        cruise=float(nom_raw.get("cruise", dynamics.v_max)),
        k_heading=float(nom_raw.get("k_heading", 2.0)),
        k_heading_d=float(nom_raw.get("k_heading_d", 0.3)),
        k_vel=float(nom_raw.get("k_vel", 2.0)),
        lookahead=float(nom_raw.get("lookahead", 0.5)),
    )
    robot_radius = float(data.get("robot_radius", 0.25))

    objects: list[WorldObject] = []
    if bool(data.get("border_wall", True)):
        ring = np.zeros((h, w), dtype=bool)
        ring[0, :] = ring[-1, :] = True
        ring[:, 0] = ring[:, -1] = True
        objects.append(WorldObject(id="_border", label="wall", mask=ring, base_blocking=True))
    for i, raw in enumerate(data.get("objects", [])):
        fpath = f"objects[{i}]"
        label = str(raw.get("label", "")).strip()
        if not label:
            raise ScenarioError("label required", fpath)
        shape = raw.get("shape")
        if not isinstance(shape, dict) or "type" not in shape:
            raise ScenarioError("shape with a type required", fpath)
        if shape["type"] == "rect":
            mask = _rasterize_rect(shape, h, w, resolution, fpath)
        elif shape["type"] == "poly":
            mask = _rasterize_poly(shape, h, w, resolution, fpath)
        else:
            raise ScenarioError(f"unknown shape type {shape['type']!r}", fpath)
        if not mask.any():
            raise ScenarioError("footprint empty after rasterization", fpath)
        objects.append(
            WorldObject(
                id=str(raw.get("id", f"obj{i}")),
                label=label,
                mask=mask,
                base_blocking=bool(raw.get("base_blocking", True)),
            )
        )

    base_map = np.zeros((h, w), dtype=bool)
    occ_index = np.full((h, w), -1, dtype=np.int16)
    for i, obj in enumerate(objects):
        if obj.base_blocking:
            base_map |= obj.mask
        occ_index[obj.mask] = i  # later objects draw over earlier ones

    dist_to_base = _kernel.sdf_from_mask(base_map, resolution)
    base_inflated = dist_to_base <= robot_radius
    base_sdf = _kernel.signed_field(base_inflated, resolution)

    try:
        s = data["start"]
        start = RobotState(float(s["x"]), float(s["y"]), float(s.get("theta", 0.0)),
                           float(s.get("v", 0.0)))
    except (KeyError, TypeError):
        raise ScenarioError("start must give x and y", "start")
    try:
        g = data["goal"]
        goal = (float(g["x"]), float(g["y"]))
        goal_radius = float(g.get("radius", 0.4))
    except (KeyError, TypeError):
        raise ScenarioError("goal must give x and y", "goal")

    instructions = []
    for i, raw in enumerate(data.get("instructions", [])):
        try:
            instructions.append((float(raw["t"]), str(raw["text"])))
        except (KeyError, TypeError):
            raise ScenarioError("needs t and text", f"instructions[{i}]")

    world = World(
        name=name,
        category=str(data.get("category", "uncategorized")),
        resolution=resolution,
        width=w,
        height=h,
        objects=tuple(objects),
        base_map=base_map,
        base_inflated=base_inflated,
        base_sdf=base_sdf,
        occ_index=occ_index,
        start=start,
        goal=goal,
        goal_radius=goal_radius,
        robot_radius=robot_radius,
        dynamics=dynamics,
        sensor=sensor,
        nominal=nominal,
        instructions=tuple(sorted(instructions)),
        duration=float(data.get("duration_s", 35.0)),
    )
    for arr in (world.base_map, world.base_inflated, world.base_sdf, world.occ_index):
        arr.setflags(write=False)

    if not world.in_bounds(start.px, start.py) or world.base_inflated[world.cell_of(start.px, start.py)]:
        raise ScenarioError("start lies in occupied or out-of-bounds space", "start")
    if not world.in_bounds(*goal) or world.base_inflated[world.cell_of(*goal)]:
        raise ScenarioError("goal lies in occupied or out-of-bounds space", "goal")
    return world


def sense(world: World, pose: RobotState, cfg: SensorConfig | None = None,
          rng: np.random.Generator | None = None) -> SemanticScan:
    """Cast rays against every object footprint (overhangs included).

    Ranges are mid-chord through the first hit cell, so a noise-free hit
    lies within half a cell of the object boundary. Optional Gaussian range
    noise and label dropout; the rng is consumed a fixed number of times
    per scan regardless of hit pattern.
    """
    cfg = cfg or world.sensor
    rng = rng or np.random.default_rng(0)
    if not world.in_bounds(pose.px, pose.py):
        raise ValueError("sensor pose outside world bounds")
    k = cfg.n_rays
    rel = -cfg.fov / 2.0 + cfg.fov * np.arange(k) / k
    ranges, hit_idx = _kernel.raycast(
        world.occ_index, pose.px, pose.py, pose.theta + rel, cfg.r_max, world.resolution
    )
    noise = rng.normal(0.0, 1.0, k)
    drop = rng.random(k)
    hit = hit_idx >= 0
    if cfg.sigma_r > 0.0:
        ranges = np.where(hit, np.clip(ranges + cfg.sigma_r * noise, 1e-6, cfg.r_max), ranges)
    dropped = drop < cfg.p_drop
    ids: list[str | None] = []
    labels: list[str | None] = []
    for i in range(k):
        if hit[i] and not dropped[i]:
            obj = world.objects[hit_idx[i]]
            ids.append(obj.id)
            labels.append(obj.label)
        else:
            ids.append(None)
            labels.append(None)
    ranges = ranges.copy()
    ranges.setflags(write=False)
    return SemanticScan(pose=pose, bearings=rel, ranges=ranges,
                        hit_ids=tuple(ids), hit_labels=tuple(labels))


def advance(world: World, state: RobotState, control: Control,
            dt: float | None = None) -> tuple[RobotState, bool]:
    """One dynamics step plus a base collision check at the new position.

    Overhang objects never collide the base; leaving the grid counts as a
    collision (the border wall normally prevents it).
    """
    dyn = world.dynamics if dt is None else DynamicsParams(
        dt=dt, v_max=world.dynamics.v_max, omega_max=world.dynamics.omega_max,
        accel_max=world.dynamics.accel_max)
    nxt = step(state, control, dyn)
    if not world.in_bounds(nxt.px, nxt.py):
        return nxt, True
    return nxt, bool(world.base_inflated[world.cell_of(nxt.px, nxt.py)])
