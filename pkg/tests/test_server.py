import json
import time

import pytest
from fastapi.testclient import TestClient

from semsafe.server import create_app


@pytest.fixture
def client():
    with TestClient(create_app()) as c:
        yield c


def _wait_done(client, ep_id, timeout=60.0):
    t0 = time.time()
    while time.time() - t0 < timeout:
        status = client.get(f"/episodes/{ep_id}").json()
        if status["done"]:
            return status
        time.sleep(0.1)
    raise TimeoutError("episode did not finish")


def test_scenarios_listing_matches_shipped(client):
    body = client.get("/scenarios").json()
    assert "open_room" in body["scenarios"]
    assert "desk_overhang" in body["scenarios"]


def test_episode_lifecycle_and_stream(client):
    resp = client.post("/episodes", json={"scenario": "open_room", "method": "lr"})
    assert resp.status_code == 200
    ep_id = resp.json()["id"]
    status = _wait_done(client, ep_id)
    assert status["outcome"] == "success"
    with client.stream("GET", f"/episodes/{ep_id}/stream") as stream:
        frames = []
        for line in stream.iter_lines():
            if line.startswith("data: "):
                frames.append(json.loads(line[6:]))
    kinds = [f["kind"] for f in frames]
    assert kinds[0] == "start"
    assert "step" in kinds
    assert "base_map" in frames[0]
    step = next(f for f in frames if f["kind"] == "step")
    assert {"t", "state", "mode", "l_sem"} <= set(step)


def test_instruction_parse_and_overlay(client):
    resp = client.post("/episodes", json={"scenario": "pool_yard", "method": "lr"})
    ep_id = resp.json()["id"]
    out = client.post(f"/episodes/{ep_id}/instruction",
                      json={"text": "avoid the swimming pool"})
    assert out.status_code == 200
    body = out.json()
    assert body["outcome"] == "parsed"
    assert body["config"]["type"] == "spatial_exclusion"
    _wait_done(client, ep_id)
    with client.stream("GET", f"/episodes/{ep_id}/stream") as stream:
        frames = [json.loads(l[6:]) for l in stream.iter_lines() if l.startswith("data: ")]
    overlays = [f for f in frames if f["kind"] == "step" and f["constraints"]]
    assert overlays, "a grounded constraint overlay must appear in the stream"
    assert any(c["obj"] == "swimming pool" for f in overlays for c in f["constraints"])


def test_clarification_flow(client):
    resp = client.post("/episodes", json={"scenario": "open_room", "method": "lr",
                                          "pace": 0.5})
    ep_id = resp.json()["id"]
    out = client.post(f"/episodes/{ep_id}/instruction", json={"text": "please behave"})
    assert out.json()["outcome"] == "clarify"
    answer = client.post(f"/episodes/{ep_id}/clarify", json={"answer": "max speed 0.5"})
    assert answer.json()["outcome"] == "parsed"
    second = client.post(f"/episodes/{ep_id}/clarify", json={"answer": "max speed 0.5"})
    assert second.status_code == 409  # nothing pending anymore


def test_unknown_episode_404(client):
    assert client.get("/episodes/nope").status_code == 404
    assert client.post("/episodes/nope/instruction", json={"text": "x"}).status_code == 404


def test_instruction_on_finished_episode_409(client):
    resp = client.post("/episodes", json={"scenario": "open_room", "method": "lr"})
    ep_id = resp.json()["id"]
    _wait_done(client, ep_id)
    out = client.post(f"/episodes/{ep_id}/instruction", json={"text": "avoid the desk"})
    assert out.status_code == 409


def test_invalid_body_422(client):
    assert client.post("/episodes", json={"method": "lr"}).status_code == 422
    resp = client.post("/episodes", json={"scenario": "open_room", "method": "bogus"})
    assert resp.status_code == 422
    assert client.post("/episodes", json={"scenario": "missing.json"}).status_code == 404
