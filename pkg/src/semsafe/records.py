"""Episode traces, outcome classification labels, and serialization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np


class Outcome(str, Enum):
    SUCCESS = "success"
    SEMANTIC_VIOLATION = "semantic_violation"
    COLLISION = "collision"
    TIMEOUT_PERCEPTION = "timeout_perception"
    TIMEOUT_SAFETY_FILTER = "timeout_safety_filter"
    TIMEOUT = "timeout"


class Method(str, Enum):
    LR = "lr"          # full pipeline, least-restrictive filter
    SB = "sb"          # full pipeline, smooth-blending filter
    GEOM = "geom"      # geometric-only baseline: language ignored
    COARSE = "coarse"  # coarse-mask, exclusion-only grounding baseline

    @property
    def uses_language(self) -> bool:
        return self is not Method.GEOM


@dataclass(frozen=True)
class StepRow:
    t: float
    px: float
    py: float
    theta: float
    v: float
    u_nom: tuple[float, float]
    u_out: tuple[float, float]
    mode: str
    l_base: float
    l_sem: float
    v_safe: float
    compute_time: float

    def to_dict(self, with_timing: bool = True) -> dict:
        d = asdict(self)
        d["u_nom"] = list(self.u_nom)
        d["u_out"] = list(self.u_out)
        if not with_timing:
            d.pop("compute_time")
        return d


@dataclass
class EpisodeRecord:
    scenario: str
    category: str
    method: str
    seed: int
    rows: list[StepRow] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    outcome: str = Outcome.TIMEOUT.value
    goal_reached: bool = False
    collided: bool = False
    min_l_sem: float = float("inf")
    final_t: float = 0.0
    wall_time: float = 0.0

    def to_dict(self, with_timing: bool = True) -> dict:
        d = {
            "scenario": self.scenario,
            "category": self.category,
            "method": self.method,
            "seed": self.seed,
            "outcome": self.outcome,
            "goal_reached": self.goal_reached,
            "collided": self.collided,
            "min_l_sem": self.min_l_sem,
            "final_t": self.final_t,
            "events": self.events,
            "rows": [r.to_dict(with_timing) for r in self.rows],
        }
        if with_timing:
            d["wall_time"] = self.wall_time
        return d

    def canonical_json(self) -> str:
        """Deterministic serialization with wall-clock timing excluded."""
        return json.dumps(self.to_dict(with_timing=False), sort_keys=True)

    def to_jsonl(self) -> str:
        head = self.to_dict(with_timing=True)
        rows = head.pop("rows")
        lines = [json.dumps({"kind": "episode", **head}, sort_keys=True)]
        lines += [json.dumps({"kind": "row", **r}, sort_keys=True) for r in rows]
        return "\n".join(lines) + "\n"

    def median_compute_time(self) -> float:
        if not self.rows:
            return 0.0
        return float(np.median([r.compute_time for r in self.rows]))


def rle_encode(mask: np.ndarray) -> dict:
    """Run-length encode a boolean grid, alternating runs starting with False."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs: list[int] = []
    if flat.size:
        changes = np.flatnonzero(np.diff(flat.view(np.int8)))
        prev = 0
        if flat[0]:
            runs.append(0)
        for c in changes:
            runs.append(int(c + 1 - prev))
            prev = int(c + 1)
        runs.append(int(flat.size - prev))
    return {"h": int(mask.shape[0]), "w": int(mask.shape[1]), "runs": runs}


def rle_decode(payload: dict) -> np.ndarray:
    flat = np.zeros(payload["h"] * payload["w"], dtype=bool)
    pos = 0
    val = False
    for run in payload["runs"]:
        if val:
            flat[pos:pos + run] = True
        pos += run
        val = not val
    return flat.reshape(payload["h"], payload["w"])
