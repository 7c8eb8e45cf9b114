import json
from pathlib import Path

import pytest

from semsafe.episode import run_episode
from semsafe.harness import (
    dump_grounding,
    list_scenarios,
    load_manifest,
    load_scenario,
    run_batch,
    summarize,
)
from semsafe.records import Method, Outcome


def test_shipped_suite_covers_constraint_categories():
    names = load_manifest()
    assert len(names) >= 6
    cats = {load_scenario(n).category for n in names}
    assert {"exclusion", "beneath", "buffer", "pace", "intent", "hybrid"} <= cats


def test_list_scenarios_includes_suite():
    names = list_scenarios()
    assert set(load_manifest()) <= set(names)


def test_empty_scenario_succeeds_any_method():
    for method in Method:
        rec = run_episode(load_scenario("open_room"), method, seed=0)
        assert rec.outcome == Outcome.SUCCESS.value, method


def test_replay_determinism_byte_identical():
    world = load_scenario("desk_overhang")
    a = run_episode(world, "lr", seed=1)
    b = run_episode(load_scenario("desk_overhang"), "lr", seed=1)
    assert a.canonical_json() == b.canonical_json()


def test_batch_writes_artifacts(tmp_path):
    summary, records = run_batch(["open_room"], methods=["lr"], trials=2,
                                 out_dir=tmp_path, workers=1)
    assert len(records) == 2
    assert (tmp_path / "summary.csv").exists()
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "plots.json").exists()
    episodes = sorted((tmp_path / "episodes").glob("*.jsonl"))
    assert [p.name for p in episodes] == ["open_room_lr_0.jsonl", "open_room_lr_1.jsonl"]
    plots = json.loads((tmp_path / "plots.json").read_text())
    assert plots["episodes"][0]["v"], "velocity series must be present"


def test_batch_rates_with_denominator_five():
    summary, records = run_batch(["open_room"], methods=["lr"], trials=5, workers=1)
    assert len(records) == 5
    cell = summary[0]
    for rate in (cell.success_rate, cell.semantic_safety_rate):
        assert min(abs(rate - k / 5) for k in range(6)) < 1e-12


def test_summary_recomputed_from_records_matches(tmp_path):
    summary, records = run_batch(["open_room"], methods=["lr", "geom"], trials=2,
                                 out_dir=tmp_path, workers=1)
    again = summarize(records)
    assert again == summary
    written = json.loads((tmp_path / "summary.json").read_text())
    assert written["cells"] == [c.__dict__ for c in summary]


def test_referee_uses_ground_truth_not_beliefs():
    # geom never grounds anything, yet its desk run must be judged unsafe
    rec = run_episode(load_scenario("desk_overhang"), "geom", seed=0)
    assert rec.outcome == Outcome.SEMANTIC_VIOLATION.value
    assert rec.min_l_sem <= 0.0
    assert all(e["outcome"] == "ignored" for e in rec.events)


def test_dump_grounding_exports_grids(tmp_path):
    meta = dump_grounding("desk_overhang", tmp_path, seconds=3.0)
    assert (tmp_path / "meta.json").exists()
    assert (tmp_path / "base_sdf.png").exists()
    assert meta["constraints"], "the desk constraint must be present"
    entry = meta["constraints"][0]
    assert (tmp_path / entry["occupancy_png"]).exists()
    assert (tmp_path / entry["sdf_png"]).exists()
    assert entry["confirmed_cells"] > 0


def test_cli_run_and_exit_codes(tmp_path, capsys):
    from semsafe.cli import main

    out_file = tmp_path / "ep.jsonl"
    assert main(["run", "--scenario", "open_room", "--method", "lr", "--seed", "0",
                 "--out", str(out_file)]) == 0
    assert out_file.exists()
    payload = json.loads(capsys.readouterr().out)
    assert payload["outcome"] == "success"
    assert main(["run", "--scenario", "does_not_exist"]) == 1
