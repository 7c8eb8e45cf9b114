import json

import numpy as np

from semsafe.records import EpisodeRecord, StepRow, rle_decode, rle_encode


def test_rle_round_trip(rng):
    for _ in range(30):
        h, w = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        mask = rng.random((h, w)) < rng.uniform(0, 1)
        payload = rle_encode(mask)
        assert np.array_equal(rle_decode(payload), mask)
        # runs alternate starting from False and sum to the grid size
        assert sum(payload["runs"]) == h * w


def test_rle_compact_for_sparse_masks():
    mask = np.zeros((100, 100), dtype=bool)
    mask[40:44, 50:60] = True
    payload = rle_encode(mask)
    assert len(json.dumps(payload)) < 500


def _record(with_rows=True) -> EpisodeRecord:
    rec = EpisodeRecord(scenario="s", category="c", method="lr", seed=3)
    if with_rows:
        rec.rows.append(StepRow(t=0.0, px=0.0, py=0.0, theta=0.0, v=0.0,
                                u_nom=(0.0, 1.0), u_out=(0.0, 1.0), mode="nominal",
                                l_base=1.0, l_sem=2.0, v_safe=1.5, compute_time=0.01))
        rec.rows.append(StepRow(t=0.05, px=0.01, py=0.0, theta=0.0, v=0.1,
                                u_nom=(0.0, 1.0), u_out=(0.0, -1.0), mode="shield",
                                l_base=0.9, l_sem=1.9, v_safe=0.2, compute_time=0.02))
    rec.wall_time = 1.23
    return rec


def test_canonical_json_excludes_timing():
    a, b = _record(), _record()
    b.wall_time = 9.99
    b.rows[0] = StepRow(**{**b.rows[0].__dict__, "compute_time": 0.5})
    assert a.canonical_json() == b.canonical_json()
    assert "compute_time" not in a.canonical_json()
    assert "wall_time" not in a.canonical_json()


def test_jsonl_has_header_and_rows():
    lines = _record().to_jsonl().strip().split("\n")
    assert len(lines) == 3
    head = json.loads(lines[0])
    assert head["kind"] == "episode"
    assert json.loads(lines[1])["kind"] == "row"


def test_median_compute_time():
    assert _record().median_compute_time() == 0.015
    assert _record(with_rows=False).median_compute_time() == 0.0
