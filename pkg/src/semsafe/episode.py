"""Closed-loop episode execution.

Control runs at the dynamics rate (20 Hz at defaults), sensing at 10 Hz,
planning at 2 Hz. Instructions arrive at scripted times (or from a live
feed), are parsed by the rule-based grammar, and become grounded
constraints for the planner and filter. A referee evaluates ground-truth
semantic margins from the true object footprints, never from beliefs, and
judges every method against the instructed constraints even when the
method ignored them.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from semsafe.core import Control, RobotState
from semsafe.filtering import (
    DEFAULT_EPSILON,
    DEFAULT_GAMMA,
    FilterMode,
    SamplingMpcParams,
    WarmStart,
    default_primitives,
    filter_least_restrictive,
    filter_smooth_blending,
)
from semsafe.grounding import (
    GroundingParams,
    GroundingPipeline,
    build_reference_view,
)
from semsafe.language import (
    ConfigSet,
    ParseOutcome,
    RobotCapabilities,
    SafetyConfig,
    add_config,
    parse_rule_based,
)
from semsafe.nominal import PdGains, TrackerMemory, plan, track
from semsafe.records import EpisodeRecord, Method, Outcome, StepRow, rle_encode
from semsafe.world import World, advance, sense

SENSE_PERIOD = 0.1          # seconds between scans (10 Hz)
PLAN_PERIOD = 0.5           # seconds between replans (2 Hz)
# Outcome sub-classification thresholds (documented operationalization):
PERCEPTION_BLOCK_LIMIT = 5.0   # s of grounding-caused unreachability
OVERRIDE_WINDOW = 10.0         # final window inspected for filter lockup
OVERRIDE_FRACTION = 0.9        # non-nominal fraction within the window
PROGRESS_EPSILON = 0.25        # m of goal progress that counts as progress


class InstructionFeed:
    """Thread-safe hand-off of live instructions into a running episode."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._pending: list[tuple[str, ParseOutcome]] = []

    def push(self, text: str, outcome: ParseOutcome) -> None:
        with self._lock:
            self._pending.append((text, outcome))

    def drain(self) -> list[tuple[str, ParseOutcome]]:
        with self._lock:
            out = self._pending
            self._pending = []
        return out


@dataclass
class EpisodeHooks:
    on_frame: callable = None      # called with frame dicts at sensing rate
    feed: InstructionFeed | None = None
    pace: float = 0.0              # wall seconds per sim second (0 = free-run)


def _constraint_overlays(view) -> list[dict]:
    out = []
    for gc in view.constraints:
        entry = {
            "id": gc.config.id,
            "obj": gc.config.obj,
            "kind": gc.config.kind.value,
            "buffer": gc.config.buffer,
        }
        if gc.belief is not None:
            entry["confirmed"] = rle_encode(gc.belief.confirmed)
        out.append(entry)
    return out


def run_episode(
    world: World,
    method: Method | str,
    seed: int,
    grounding_params: GroundingParams | None = None,
    mpc_params: SamplingMpcParams | None = None,
    hooks: EpisodeHooks | None = None,
) -> EpisodeRecord:
    method = Method(method)
    gp = grounding_params or GroundingParams()
    dyn = world.dynamics
    mp = mpc_params or SamplingMpcParams(seed=seed)
    hooks = hooks or EpisodeHooks()
    caps = RobotCapabilities(v_max=dyn.v_max, omega_max=dyn.omega_max,
                             radius=world.robot_radius)
    gains = PdGains(
        k_heading=world.nominal.k_heading,
        k_vel=world.nominal.k_vel,
        cruise_speed=world.nominal.cruise,
        k_heading_d=world.nominal.k_heading_d,
        lookahead=world.nominal.lookahead,
    )

    ss = np.random.SeedSequence([seed, 0x5EED])
    sensor_rng, filter_rng = (np.random.default_rng(s) for s in ss.spawn(2))

    pipeline = GroundingPipeline(world, gp, coarse=method is Method.COARSE)
    base_view = GroundingPipeline(world, gp).publish()  # static, base-only
    configs = ConfigSet()
    referee_configs: list[SafetyConfig] = []
    referee = build_reference_view(world, referee_configs, gp)

    warm = WarmStart.zeros(mp.horizon)
    primitives = default_primitives(dyn)
    tracker_mem = TrackerMemory()
    record = EpisodeRecord(
        scenario=world.name, category=world.category, method=method.value, seed=seed
    )

    n_steps = int(round(world.duration / dyn.dt))
    sense_every = max(1, int(round(SENSE_PERIOD / dyn.dt)))
    plan_every = max(1, int(round(PLAN_PERIOD / dyn.dt)))

    x = world.start
    path = None
    pending = list(world.instructions)
    blocked_run = 0.0
    max_blocked_run = 0.0
    blocked_at_stamp = None
    goal_dists: list[float] = []
    min_l_sem = float("inf")
    t_wall0 = time.perf_counter()
    t = 0.0

    def _activate(text: str, outcome: ParseOutcome) -> None:
        nonlocal configs, referee
        event = {"t": round(t, 6), "text": text}
        if method.uses_language and outcome.is_parsed:
            configs = add_config(configs, outcome.config)
            pipeline.sync_configs(configs)
            referee_configs.append(outcome.config)
            referee = build_reference_view(world, referee_configs, gp)
            event.update(outcome="parsed", config=outcome.config.to_template_dict(),
                         config_id=outcome.config.id)
        elif not method.uses_language:
            # The robot ignores language; the referee still judges it.
            if outcome.is_parsed:
                referee_configs.append(outcome.config)
                referee = build_reference_view(world, referee_configs, gp)
            event.update(outcome="ignored")
        elif outcome.clarify is not None:
            event.update(outcome="clarify", question=outcome.clarify)
        else:
            event.update(outcome="rejected", reason=outcome.rejected)
        record.events.append(event)

    for k in range(n_steps):
        t = k * dyn.dt
        while pending and pending[0][0] <= t + 1e-9:
            _, text = pending.pop(0)
            _activate(text, parse_rule_based(text, caps))
        if hooks.feed is not None:
            for text, outcome in hooks.feed.drain():
                _activate(text, outcome)

        sensed = False
        if k % sense_every == 0:
            scan = sense(world, x, world.sensor, sensor_rng)
            pipeline.integrate(scan)
            sensed = True
        view = pipeline.publish()

        if k % plan_every == 0:
            if blocked_at_stamp == view.stamp:
                # Same grounding snapshot that was unreachable; keep counting
                # without re-running the search.
                blocked_run += PLAN_PERIOD
                max_blocked_run = max(max_blocked_run, blocked_run)
            elif path is None or path.stamp != view.stamp:
                # Prefer paths with tracking slack around every failure set;
                # fall back to the bare free space before declaring blockage.
                slack = world.robot_radius + 0.1
                path = plan(view, (x.px, x.py), world.goal, world.goal_radius,
                            stamp=view.stamp, clearance=slack)
                if path is None:
                    path = plan(view, (x.px, x.py), world.goal, world.goal_radius,
                                stamp=view.stamp, clearance=0.0)
                if path is None:
                    blocked_at_stamp = view.stamp
                    base_ok = plan(base_view, (x.px, x.py), world.goal,
                                   world.goal_radius) is not None
                    if base_ok:
                        blocked_run += PLAN_PERIOD
                        max_blocked_run = max(max_blocked_run, blocked_run)
                else:
                    blocked_at_stamp = None
                    blocked_run = 0.0

        if path is not None:
            u_nom = track(path, x, gains, dyn, tracker_mem)
        else:
            u_nom = Control(0.0, -dyn.accel_max)

        if method is Method.SB:
            decision = filter_smooth_blending(
                x, u_nom, view, mp, warm, gamma=DEFAULT_GAMMA,
                primitives=primitives, dyn=dyn, rng=filter_rng,
            )
        else:
            decision = filter_least_restrictive(
                x, u_nom, view, mp, warm, eps=DEFAULT_EPSILON, dyn=dyn,
                rng=filter_rng,
            )

        l_base = base_view.combined(x)
        l_sem = referee.combined(x, decision.u_out)
        min_l_sem = min(min_l_sem, l_sem)
        goal_dists.append(math.hypot(x.px - world.goal[0], x.py - world.goal[1]))
        record.rows.append(
            StepRow(
                t=round(t, 6), px=x.px, py=x.py, theta=x.theta, v=x.v,
                u_nom=u_nom.as_tuple(), u_out=decision.u_out.as_tuple(),
                mode=decision.mode.value, l_base=l_base, l_sem=l_sem,
                v_safe=decision.v_safe, compute_time=decision.compute_time,
            )
        )

        if hooks.on_frame is not None and sensed:
            hooks.on_frame(
                {
                    "schema": 1, "kind": "step", "t": round(t, 6),
                    "state": {"px": x.px, "py": x.py, "theta": x.theta, "v": x.v},
                    "mode": decision.mode.value,
                    "v_safe": decision.v_safe, "l_sem": l_sem, "l_base": l_base,
                    "u_nom": u_nom.as_tuple(), "u_out": decision.u_out.as_tuple(),
                    "path": [] if path is None else path.waypoints[::4].tolist(),
                    "constraints": _constraint_overlays(view),
                    "events": record.events[-3:],
                }
            )
            if hooks.pace > 0.0:
                time.sleep(hooks.pace * SENSE_PERIOD)

        x, collided = advance(world, x, decision.u_out)
        if collided:
            record.collided = True
            t = (k + 1) * dyn.dt
            break
        if math.hypot(x.px - world.goal[0], x.py - world.goal[1]) <= world.goal_radius:
            record.goal_reached = True
            t = (k + 1) * dyn.dt
            break
    else:
        t = n_steps * dyn.dt

    min_l_sem = min(min_l_sem, referee.combined(x, None))
    record.min_l_sem = min_l_sem
    record.final_t = round(t, 6)
    record.wall_time = time.perf_counter() - t_wall0
    record.outcome = _classify(record, world, min_l_sem, max_blocked_run, goal_dists, dyn.dt)
    if hooks.on_frame is not None:
        hooks.on_frame({"schema": 1, "kind": "end", "outcome": record.outcome,
                        "t": record.final_t, "min_l_sem": min_l_sem})
    return record


def _classify(record: EpisodeRecord, world: World, min_l_sem: float,
              max_blocked_run: float, goal_dists: list[float], dt: float) -> str:
    if record.collided:
        return Outcome.COLLISION.value
    if min_l_sem <= 0.0:
        return Outcome.SEMANTIC_VIOLATION.value
    if record.goal_reached:
        return Outcome.SUCCESS.value
    if max_blocked_run >= PERCEPTION_BLOCK_LIMIT:
        return Outcome.TIMEOUT_PERCEPTION.value
    win = max(1, int(round(OVERRIDE_WINDOW / dt)))
    tail = record.rows[-win:]
    if tail:
        overridden = sum(1 for r in tail if r.mode != FilterMode.NOMINAL.value)
        d0 = goal_dists[-len(tail)]
        progress = d0 - min(goal_dists[-len(tail):])
        if overridden / len(tail) >= OVERRIDE_FRACTION and progress < PROGRESS_EPSILON:
            return Outcome.TIMEOUT_SAFETY_FILTER.value
    return Outcome.TIMEOUT.value


def start_frame(world: World) -> dict:
    """Static scene description sent once per stream."""
    return {
        "schema": 1,
        "kind": "start",
        "scenario": world.name,
        "category": world.category,
        "resolution": world.resolution,
        "extent": list(world.extent),
        "goal": [world.goal[0], world.goal[1], world.goal_radius],
        "start": {"px": world.start.px, "py": world.start.py,
                  "theta": world.start.theta, "v": world.start.v},
        "duration": world.duration,
        "base_map": rle_encode(np.asarray(world.base_map)),
        "overhangs": rle_encode(
            np.any([o.mask for o in world.objects if not o.base_blocking], axis=0)
            if any(not o.base_blocking for o in world.objects)
            else np.zeros((world.height, world.width), dtype=bool)
        ),
    }
