"""Batch evaluation: scenario x method x seed grids, metrics, artifacts.

Episodes run in parallel processes (each episode is internally
single-owner); summary rates are recomputed from raw records by a pure
function so emitted numbers can always be audited against the episode
files.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from semsafe.episode import run_episode
from semsafe.grounding import GroundingParams, GroundingPipeline
from semsafe.records import EpisodeRecord, Method, Outcome, StepRow
from semsafe.world import World, load_world, world_from_dict

DEFAULT_METHODS = (Method.LR, Method.SB, Method.GEOM, Method.COARSE)


def scenario_dir() -> Path:
    return Path(str(resources.files("semsafe").joinpath("scenarios")))


def list_scenarios() -> list[str]:
    return sorted(p.stem for p in scenario_dir().glob("*.json") if p.stem != "manifest")


def load_scenario(name_or_path: str | Path) -> World:
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return load_world(p)
    shipped = scenario_dir() / f"{name_or_path}.json"
    if shipped.exists():
        return load_world(shipped)
    raise FileNotFoundError(f"no scenario named {name_or_path!r}")


def load_manifest(path: str | Path | None = None) -> list[str]:
    p = Path(path) if path else scenario_dir() / "manifest.json"
    data = json.loads(p.read_text())
    return list(data["scenarios"])


@dataclass(frozen=True)
class MetricsCell:
    method: str
    category: str
    episodes: int
    success_rate: float
    semantic_safety_rate: float
    timeout_perception_rate: float
    timeout_safety_filter_rate: float
    collision_rate: float
    mean_filter_latency: float
    median_filter_latency: float


def summarize(records: list[EpisodeRecord]) -> list[MetricsCell]:
    """Aggregate per (method, category); pure so tests can recompute it."""
    cells: dict[tuple[str, str], list[EpisodeRecord]] = {}
    for rec in records:
        cells.setdefault((rec.method, rec.category), []).append(rec)
    out = []
    for (method, category), recs in sorted(cells.items()):
        n = len(recs)
        lat = [r.compute_time for rec in recs for r in rec.rows]
        out.append(
            MetricsCell(
                method=method,
                category=category,
                episodes=n,
                success_rate=sum(r.outcome == Outcome.SUCCESS.value for r in recs) / n,
                semantic_safety_rate=sum(r.min_l_sem > 0.0 for r in recs) / n,
                timeout_perception_rate=sum(
                    r.outcome == Outcome.TIMEOUT_PERCEPTION.value for r in recs) / n,
                timeout_safety_filter_rate=sum(
                    r.outcome == Outcome.TIMEOUT_SAFETY_FILTER.value for r in recs) / n,
                collision_rate=sum(r.outcome == Outcome.COLLISION.value for r in recs) / n,
                mean_filter_latency=float(np.mean(lat)) if lat else 0.0,
                median_filter_latency=float(np.median(lat)) if lat else 0.0,
            )
        )
    return out


def _run_one(args: tuple[str, str, int]) -> EpisodeRecord:
    scenario, method, seed = args
    world = load_scenario(scenario)
    return run_episode(world, method, seed)


def run_batch(
    scenarios: list[str],
    methods: list[Method | str] | None = None,
    trials: int = 5,
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> tuple[list[MetricsCell], list[EpisodeRecord]]:
    """Cross product of scenarios x methods x seeds 0..trials-1.

    Episode failures are recorded and the batch continues. When out_dir is
    given, writes one JSONL per episode plus summary.csv, summary.json and
    plot-ready series data.
    """
    methods = [Method(m) for m in (methods or DEFAULT_METHODS)]
    jobs = [(s, m.value, seed) for s in scenarios for m in methods for seed in range(trials)]
    records: list[EpisodeRecord] = []
    failures: list[dict] = []
    if workers is None:
        import os

        workers = min(8, os.cpu_count() or 1)
    if workers <= 1:
        results = map(_run_one_safe, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_run_one_safe, jobs)
    for job, result in zip(jobs, results):
        if isinstance(result, EpisodeRecord):
            records.append(result)
        else:
            failures.append({"job": list(job), "error": result})
    if workers > 1:
        pool.shutdown()

    summary = summarize(records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "episodes").mkdir(exist_ok=True)
        for rec in records:
            name = f"{rec.scenario}_{rec.method}_{rec.seed}.jsonl"
            (out / "episodes" / name).write_text(rec.to_jsonl())
        write_summary_csv(summary, out / "summary.csv")
        (out / "summary.json").write_text(
            json.dumps({"cells": [c.__dict__ for c in summary], "failures": failures},
                       indent=2, sort_keys=True)
        )
        (out / "plots.json").write_text(json.dumps(plot_data(records), sort_keys=True))
    return summary, records


def _run_one_safe(args):
    try:
        return _run_one(args)
    except Exception as exc:  # recorded per episode, batch continues
        return f"{type(exc).__name__}: {exc}"


def write_summary_csv(summary: list[MetricsCell], path: str | Path) -> None:
    fields = list(MetricsCell.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for cell in summary:
            writer.writerow(cell.__dict__)


def plot_data(records: list[EpisodeRecord]) -> dict:
    """Margin-over-time and velocity series per episode, plot-ready."""
    series = []
    for rec in records:
        series.append(
            {
                "scenario": rec.scenario,
                "method": rec.method,
                "seed": rec.seed,
                "outcome": rec.outcome,
                "t": [r.t for r in rec.rows],
                "v": [r.v for r in rec.rows],
                "l_sem": [min(r.l_sem, 1e3) for r in rec.rows],
                "l_base": [min(r.l_base, 1e3) for r in rec.rows],
                "v_safe": [min(r.v_safe, 1e3) for r in rec.rows],
                "mode": [r.mode for r in rec.rows],
            }
        )
    return {"schema": 1, "episodes": series}


def dump_grounding(scenario: str | Path, out_dir: str | Path, seconds: float = 6.0,
                   method: Method | str = Method.LR, seed: int = 0) -> dict:
    """Export per-constraint grounding grids as grayscale PNGs + metadata.

    Runs a short episode, then replays the recorded trajectory through a
    fresh grounding pass using the same sensor stream, so the dumped grids
    are exactly what the episode's filter saw at its final step.
    """
    from PIL import Image

    from semsafe.core import RobotState
    from semsafe.episode import SENSE_PERIOD
    from semsafe.language import (
        ConfigSet,
        RobotCapabilities,
        add_config,
        config_from_template,
    )
    from semsafe.world import sense

    p = Path(scenario)
    if not (p.suffix == ".json" and p.exists()):
        p = scenario_dir() / f"{scenario}.json"
    data = json.loads(p.read_text())
    data["duration_s"] = seconds
    world = world_from_dict(data, name=data.get("name", p.stem))
    record = run_episode(world, method, seed)

    caps = RobotCapabilities(v_max=world.dynamics.v_max,
                             omega_max=world.dynamics.omega_max,
                             radius=world.robot_radius)
    cset = ConfigSet()
    for ev in record.events:
        if ev.get("outcome") == "parsed":
            cset = add_config(cset, config_from_template(ev["config"], ev["text"], caps))
    pipeline = GroundingPipeline(world, GroundingParams(),
                                 coarse=Method(method) is Method.COARSE)
    pipeline.sync_configs(cset)
    sensor_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]).spawn(2)[0])
    sense_every = max(1, int(round(SENSE_PERIOD / world.dynamics.dt)))
    for k, row in enumerate(record.rows):
        if k % sense_every == 0:
            pose = RobotState(row.px, row.py, row.theta, row.v)
            pipeline.integrate(sense(world, pose, world.sensor, sensor_rng))
    view = pipeline.publish()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def _save_gray(arr: np.ndarray, path: Path) -> None:
        a = np.asarray(arr, dtype=np.float64)
        top = a[np.isfinite(a)].max() if np.isfinite(a).any() else 1.0
        img = np.clip(a / max(top, 1e-9), 0.0, 1.0)
        Image.fromarray((img * 255).astype(np.uint8), mode="L").save(path)

    meta = {
        "scenario": world.name,
        "method": Method(method).value,
        "seed": seed,
        "resolution": world.resolution,
        "extent": list(world.extent),
        "seconds": seconds,
        "outcome": record.outcome,
        "constraints": [],
    }
    _save_gray(np.minimum(world.base_sdf, 20.0), out / "base_sdf.png")
    for gc in view.constraints:
        cid = gc.config.id
        entry = {"id": cid, "obj": gc.config.obj, "kind": gc.config.kind.value,
                 "buffer": gc.config.buffer}
        if gc.belief is not None:
            _save_gray(gc.belief.confirmed.astype(float), out / f"{cid}_occupancy.png")
            entry["occupancy_png"] = f"{cid}_occupancy.png"
            entry["confirmed_cells"] = int(gc.belief.confirmed.sum())
        if gc.sdf is not None:
            _save_gray(np.minimum(gc.sdf.values, 20.0), out / f"{cid}_sdf.png")
            entry["sdf_png"] = f"{cid}_sdf.png"
            entry["sdf_stamp"] = gc.sdf.stamp
        meta["constraints"].append(entry)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta
