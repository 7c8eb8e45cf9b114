"""HTTP serving layer: live episodes with streamed frames and instructions.

Endpoints:
  GET  /scenarios                      list shipped scenarios
  POST /episodes                       start a live episode (runs in a thread)
  GET  /episodes/{id}                  status summary
  POST /episodes/{id}/instruction      parse + inject an instruction
  POST /episodes/{id}/clarify          answer a pending clarification
  GET  /episodes/{id}/stream           server-sent events, ~sensing rate

Payloads carry a schema field; grids are run-length encoded. Instructions
are parsed synchronously (rule-based by default, LLM when configured) so
the response carries the ParseOutcome; parsed configs activate at the next
control tick of the running episode.
"""

from __future__ import annotations

import itertools
import json
import queue
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from semsafe.episode import EpisodeHooks, InstructionFeed, run_episode, start_frame
from semsafe.harness import list_scenarios, load_scenario
from semsafe.language import LlmParser, ParseOutcome, RobotCapabilities, parse_rule_based
from semsafe.records import Method


class StartEpisodeBody(BaseModel):
    scenario: str
    method: str = "lr"
    seed: int = 0
    pace: float = 0.0          # wall seconds per sim second; 0 free-runs
    use_llm: bool = False


class InstructionBody(BaseModel):
    text: str


class ClarifyBody(BaseModel):
    answer: str


@dataclass
class LiveEpisode:
    id: str
    scenario: str
    method: str
    seed: int
    feed: InstructionFeed
    caps: RobotCapabilities
    use_llm: bool = False
    frames: list[dict] = field(default_factory=list)
    subscribers: list[queue.Queue] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    done: bool = False
    outcome: str | None = None
    pending_clarification: str | None = None

    def publish(self, frame: dict) -> None:
        with self.lock:
            self.frames.append(frame)
            for q in self.subscribers:
                q.put(frame)

    def subscribe(self) -> tuple[list[dict], queue.Queue]:
        q: queue.Queue = queue.Queue()
        with self.lock:
            return list(self.frames), (self.subscribers.append(q) or q)

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)


def create_app() -> FastAPI:
    app = FastAPI(title="semsafe", version="0.1.0")
    episodes: dict[str, LiveEpisode] = {}
    counter = itertools.count()

    def _get(episode_id: str) -> LiveEpisode:
        ep = episodes.get(episode_id)
        if ep is None:
            raise HTTPException(status_code=404, detail="unknown episode")
        return ep

    @app.get("/scenarios")
    def scenarios() -> dict:
        return {"schema": 1, "scenarios": list_scenarios()}

    @app.post("/episodes")
    def start_episode(body: StartEpisodeBody) -> dict:
        try:
            world = load_scenario(body.scenario)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        try:
            method = Method(body.method)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown method {body.method!r}")
        ep = LiveEpisode(
            id=f"ep{next(counter)}",
            scenario=body.scenario,
            method=method.value,
            seed=body.seed,
            feed=InstructionFeed(),
            caps=RobotCapabilities(
                v_max=world.dynamics.v_max,
                omega_max=world.dynamics.omega_max,
                radius=world.robot_radius,
            ),
            use_llm=body.use_llm,
        )
        episodes[ep.id] = ep
        ep.publish(start_frame(world))

        def _run() -> None:
            hooks = EpisodeHooks(on_frame=ep.publish, feed=ep.feed, pace=body.pace)
            record = run_episode(world, method, body.seed, hooks=hooks)
            with ep.lock:
                ep.done = True
                ep.outcome = record.outcome
            ep.publish({"schema": 1, "kind": "closed", "outcome": record.outcome})

        threading.Thread(target=_run, daemon=True).start()
        return {"schema": 1, "id": ep.id, "scenario": ep.scenario, "method": ep.method}

    @app.get("/episodes/{episode_id}")
    def episode_status(episode_id: str) -> dict:
        ep = _get(episode_id)
        return {
            "schema": 1, "id": ep.id, "scenario": ep.scenario, "method": ep.method,
            "seed": ep.seed, "done": ep.done, "outcome": ep.outcome,
            "frames": len(ep.frames),
        }

    def _parse(ep: LiveEpisode, text: str) -> ParseOutcome:
        if ep.use_llm:
            outcome = LlmParser(caps=ep.caps).parse(text)
            if outcome.rejected == "endpoint unavailable":
                outcome = parse_rule_based(text, ep.caps)
            return outcome
        return parse_rule_based(text, ep.caps)

    def _outcome_payload(outcome: ParseOutcome) -> dict:
        if outcome.is_parsed:
            return {"outcome": "parsed", "config": outcome.config.to_template_dict(),
                    "config_id": outcome.config.id}
        if outcome.clarify is not None:
            return {"outcome": "clarify", "question": outcome.clarify}
        return {"outcome": "rejected", "reason": outcome.rejected}

    @app.post("/episodes/{episode_id}/instruction")
    def post_instruction(episode_id: str, body: InstructionBody) -> dict:
        ep = _get(episode_id)
        if ep.done:
            raise HTTPException(status_code=409, detail="episode finished")
        outcome = _parse(ep, body.text)
        if outcome.is_parsed:
            ep.feed.push(body.text, outcome)
        elif outcome.clarify is not None:
            with ep.lock:
                ep.pending_clarification = outcome.clarify
        payload = _outcome_payload(outcome)
        ep.publish({"schema": 1, "kind": "parse", "text": body.text, **payload})
        return {"schema": 1, "text": body.text, **payload}

    @app.post("/episodes/{episode_id}/clarify")
    def post_clarify(episode_id: str, body: ClarifyBody) -> dict:
        ep = _get(episode_id)
        if ep.done:
            raise HTTPException(status_code=409, detail="episode finished")
        if ep.pending_clarification is None:
            raise HTTPException(status_code=409, detail="nothing to clarify")
        outcome = _parse(ep, body.answer)
        if outcome.is_parsed:
            ep.feed.push(body.answer, outcome)
            with ep.lock:
                ep.pending_clarification = None
        payload = _outcome_payload(outcome)
        ep.publish({"schema": 1, "kind": "parse", "text": body.answer, **payload})
        return {"schema": 1, "text": body.answer, **payload}

    @app.get("/episodes/{episode_id}/stream")
    def stream(episode_id: str):
        ep = _get(episode_id)
        backlog, q = ep.subscribe()

        def _events():
            try:
                for frame in backlog:
                    yield f"data: {json.dumps(frame)}\n\n"
                if ep.done:
                    return
                while True:
                    frame = q.get(timeout=30.0)
                    yield f"data: {json.dumps(frame)}\n\n"
                    if frame.get("kind") == "closed":
                        return
            except queue.Empty:
                return
            finally:
                ep.unsubscribe(q)

        return StreamingResponse(_events(), media_type="text/event-stream")

    return app


def serve(bind: str = "127.0.0.1:8787") -> None:
    """Blocking server entry point used by the CLI."""
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(create_app(), host=host or "127.0.0.1", port=int(port or 8787),
                log_level="warning")
