"""Instruction parsing into structured safety configurations.

Two parsers produce the same configuration type: a deterministic
rule-based grammar (used by the simulation suite, needs no network) and a
chat-completion client speaking the de-facto JSON wire format. Both emit
entries of the JSON template published in assets/safety_config.schema.json:

    {"type": ..., "obj": ..., "buffer": ..., "vel max": ..., "angular vel max": ...}
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources

import httpx

DEFAULT_CAP = 8

# Fractions of the platform limits used when an instruction asks for slow or
# quiet motion without giving numbers.
INTENT_VEL_FRACTION = 0.3
INTENT_ANG_FRACTION = 0.3
# Vicinity radius implied by "near"/"around"; "on"/"in" means containment.
NEAR_BUFFER = 0.75
AWAY_BUFFER = 0.5


class Kind(str, Enum):
    SPATIAL_EXCLUSION = "spatial_exclusion"
    KINEMATIC_MODULATION = "kinematic_modulation"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class RobotCapabilities:
    v_max: float = 1.5
    omega_max: float = 1.0
    radius: float = 0.25


@dataclass(frozen=True)
class SafetyConfig:
    kind: Kind
    obj: str
    buffer: float = 0.0
    vel_max: float | None = None
    angular_vel_max: float | None = None
    source_text: str = ""
    id: str = ""

    def __post_init__(self) -> None:
        if self.buffer < 0.0:
            raise ValueError("buffer must be >= 0")
        if self.vel_max is not None and self.vel_max <= 0.0:
            raise ValueError("vel_max must be positive when set")
        if self.angular_vel_max is not None and self.angular_vel_max <= 0.0:
            raise ValueError("angular_vel_max must be positive when set")
        has_limit = self.vel_max is not None or self.angular_vel_max is not None
        if self.kind is Kind.SPATIAL_EXCLUSION:
            if not self.obj:
                raise ValueError("spatial exclusion requires an object")
            if has_limit:
                raise ValueError("spatial exclusion carries no velocity limits")
        elif self.kind is Kind.KINEMATIC_MODULATION:
            if self.obj:
                raise ValueError("kinematic modulation is global (no object)")
            if not has_limit:
                raise ValueError("kinematic modulation requires a velocity limit")
        else:
            if not self.obj or not has_limit:
                raise ValueError("hybrid requires an object and a velocity limit")

    def to_template_dict(self) -> dict:
        return {
            "type": self.kind.value,
            "obj": self.obj,
            "buffer": self.buffer,
            "vel max": self.vel_max,
            "angular vel max": self.angular_vel_max,
        }


def config_id(source_text: str) -> str:
    return hashlib.sha1(source_text.strip().lower().encode()).hexdigest()[:10]


def config_from_template(data: dict, source_text: str, caps: RobotCapabilities) -> SafetyConfig:
    """Build a SafetyConfig from a template dict, tolerating key variants."""
    norm = {re.sub(r"[\s_]+", "", str(k).lower()): v for k, v in data.items()}
    kind = Kind(str(norm["type"]).strip().lower().replace(" ", "_"))
    obj = str(norm.get("obj") or "").strip()
    buffer = float(norm.get("buffer") or 0.0)

    def _limit(key: str, cap: float) -> float | None:
        raw = norm.get(key)
        if raw is None or raw == "":
            return None
        val = float(raw)
        if val <= 0.0:
            raise ValueError(f"{key} must be positive")
        return min(val, cap)

    return SafetyConfig(
        kind=kind,
        obj=obj,
        buffer=buffer,
        vel_max=_limit("velmax", caps.v_max),
        angular_vel_max=_limit("angularvelmax", caps.omega_max),
        source_text=source_text,
        id=config_id(source_text),
    )


@dataclass(frozen=True)
class ParseOutcome:
    """Exactly one of config / clarify / rejected is populated."""

    config: SafetyConfig | None = None
    clarify: str | None = None
    rejected: str | None = None

    def __post_init__(self) -> None:
        populated = sum(x is not None for x in (self.config, self.clarify, self.rejected))
        if populated != 1:
            raise ValueError("exactly one outcome variant must be populated")

    @classmethod
    def parsed(cls, config: SafetyConfig) -> "ParseOutcome":
        return cls(config=config)

    @classmethod
    def clarification(cls, question: str) -> "ParseOutcome":
        return cls(clarify=question)

    @classmethod
    def rejection(cls, reason: str) -> "ParseOutcome":
        return cls(rejected=reason)

    @property
    def is_parsed(self) -> bool:
        return self.config is not None


@dataclass(frozen=True)
class ConfigSet:
    configs: tuple[SafetyConfig, ...] = ()
    cap: int = DEFAULT_CAP

    def __post_init__(self) -> None:
        if self.cap < 1:
            raise ValueError("cap must be positive")
        ids = [c.id for c in self.configs]
        if len(ids) != len(set(ids)):
            raise ValueError("config ids must be unique")
        if len(self.configs) > self.cap:
            raise ValueError("config set exceeds cap")


def add_config(cset: ConfigSet, config: SafetyConfig) -> ConfigSet:
    """Append a config; same id replaces in place, overflow evicts the oldest."""
    existing = [c.id for c in cset.configs]
    if config.id in existing:
        configs = tuple(config if c.id == config.id else c for c in cset.configs)
        return replace(cset, configs=configs)
    configs = cset.configs + (config,)
    if len(configs) > cset.cap:
        configs = configs[len(configs) - cset.cap:]
    return replace(cset, configs=configs)


def remove_config(cset: ConfigSet, config_id_: str) -> ConfigSet:
    return replace(cset, configs=tuple(c for c in cset.configs if c.id != config_id_))


# --- rule-based grammar -----------------------------------------------------

_ARTICLE = r"(?:the\s+|a\s+|an\s+|any\s+|all\s+)?"
_NUM = r"(\d+(?:\.\d+)?)"
_SPEED_UNIT = r"(?:\s*(?:m/s|m/sec|mps|meters? per second))?"
_DIST_UNIT = r"\s*(?:m\b|meters?\b|metres?\b)"
_PACE_VERBS = (
    r"(slow down|go slow(?:ly)?|move slow(?:ly)?|drive slow(?:ly)?|"
    r"reduce(?: your)? speed|be (?:extra |very )?careful|be quiet|be gentle)"
)
_PREP = r"(on|in|near|around|by|beside|next to|close to|when (?:near|close to))"
_QUIET_VERBS = ("be quiet", "be gentle", "be careful", "be extra careful", "be very careful")


def _clean_obj(text: str) -> str:
    obj = text.strip().strip(".!,;:").strip()
    obj = re.sub(r"^(?:the|a|an|any|all)\s+", "", obj, flags=re.I)
    return obj.lower()


def parse_rule_based(instruction: str, caps: RobotCapabilities | None = None) -> ParseOutcome:
    """Deterministic grammar covering the supported instruction phrasings.

    Recognizes exclusion ("avoid X", "don't go under X", "stay out of X"),
    buffered exclusion ("keep D m away from X"), contextual slow-downs
    ("move slowly near X [below V m/s]") and global speed caps ("max speed
    V", "never exceed V"). Anything else asks for clarification.
    """
    caps = caps or RobotCapabilities()
    if not instruction or not instruction.strip():
        return ParseOutcome.rejection("empty instruction")
    text = instruction.strip().rstrip(".!?").strip().lower()
    text = re.sub(r"\s+", " ", text)
    text = re.sub(r"^please\s+", "", text)

    def _cfg(**kw) -> ParseOutcome:
        try:
            cfg = SafetyConfig(source_text=instruction, id=config_id(instruction), **kw)
        except ValueError as exc:
            return ParseOutcome.clarification(
                f"I could not turn '{instruction}' into a valid constraint ({exc}); "
                "can you rephrase it?"
            )
        return ParseOutcome.parsed(cfg)

    m = re.fullmatch(rf"avoid {_ARTICLE}(.+)", text)
    if m:
        return _cfg(kind=Kind.SPATIAL_EXCLUSION, obj=_clean_obj(m.group(1)))

    m = re.fullmatch(
        rf"(?:do not|don'?t|never) (?:enter|go (?:in(?:to|side)?|through)) {_ARTICLE}(.+)", text
    )
    if m:
        return _cfg(kind=Kind.SPATIAL_EXCLUSION, obj=_clean_obj(m.group(1)))

    m = re.fullmatch(
        rf"(?:do not|don'?t|never) go (under(?:neath)?|beneath|below|near) {_ARTICLE}(.+)", text
    )
    if m:
        buffer = NEAR_BUFFER if m.group(1) == "near" else 0.0
        return _cfg(kind=Kind.SPATIAL_EXCLUSION, obj=_clean_obj(m.group(2)), buffer=buffer)

    m = re.fullmatch(rf"stay (out of|away from) {_ARTICLE}(.+)", text)
    if m:
        buffer = AWAY_BUFFER if m.group(1) == "away from" else 0.0
        return _cfg(kind=Kind.SPATIAL_EXCLUSION, obj=_clean_obj(m.group(2)), buffer=buffer)

    m = re.fullmatch(
        rf"(?:keep|stay) (?:at least )?{_NUM}{_DIST_UNIT}\s*(?:away )?from {_ARTICLE}(.+)", text
    )
    if m:
        return _cfg(
            kind=Kind.SPATIAL_EXCLUSION, obj=_clean_obj(m.group(2)), buffer=float(m.group(1))
        )

    m = re.fullmatch(
        rf"{_PACE_VERBS} {_PREP} {_ARTICLE}(.+?)"
        rf"(?: (?:below|under|at most) {_NUM}{_SPEED_UNIT})?",
        text,
    )
    if m:
        verb, prep, obj, speed = m.group(1), m.group(2), m.group(3), m.group(4)
        vel = min(float(speed), caps.v_max) if speed else INTENT_VEL_FRACTION * caps.v_max
        quiet = any(verb.startswith(q) for q in _QUIET_VERBS)
        return _cfg(
            kind=Kind.HYBRID,
            obj=_clean_obj(obj),
            buffer=0.0 if prep in ("on", "in") else NEAR_BUFFER,
            vel_max=vel,
            angular_vel_max=INTENT_ANG_FRACTION * caps.omega_max if quiet else None,
        )

    m = re.fullmatch(
        rf"(?:max(?:imum)? speed(?: of)?|never exceed|do not exceed|don'?t exceed|"
        rf"keep (?:your )?speed (?:below|under)) {_NUM}{_SPEED_UNIT}",
        text,
    )
    if m:
        return _cfg(
            kind=Kind.KINEMATIC_MODULATION, obj="", vel_max=min(float(m.group(1)), caps.v_max)
        )

    m = re.fullmatch(r"slow down|go slow(?:ly)?|move slow(?:ly)?|drive slow(?:ly)?", text)
    if m:
        return _cfg(
            kind=Kind.KINEMATIC_MODULATION, obj="", vel_max=INTENT_VEL_FRACTION * caps.v_max
        )

    return ParseOutcome.clarification(
        f"I did not understand '{instruction}'. I can avoid objects, keep a distance "
        "from them, slow down near them, or cap my speed globally; can you rephrase?"
    )


# --- LLM-backed parser -------------------------------------------------------

ENV_URL = "SEMSAFE_LLM_URL"
ENV_MODEL = "SEMSAFE_LLM_MODEL"
ENV_KEY = "SEMSAFE_LLM_KEY"


def load_schema() -> dict:
    with resources.files("semsafe").joinpath("assets/safety_config.schema.json").open() as fh:
        return json.load(fh)


def _load_prompt(caps: RobotCapabilities) -> str:
    raw = resources.files("semsafe").joinpath("assets/llm_prompt.txt").read_text()
    return raw.format(
        v_max=caps.v_max,
        omega_max=caps.omega_max,
        radius=caps.radius,
        schema=json.dumps(load_schema()["properties"], indent=2),
    )


def _extract_json(content: str) -> dict:
    content = content.strip()
    content = re.sub(r"^```(?:json)?\s*|\s*```$", "", content)
    start = content.find("{")
    end = content.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in response")
    return json.loads(content[start : end + 1])


@dataclass
class LlmParser:
    """Chat-completion client returning validated configurations.

    Endpoint, model and credential come from the constructor or from the
    SEMSAFE_LLM_URL / SEMSAFE_LLM_MODEL / SEMSAFE_LLM_KEY environment
    variables. A custom httpx transport can be injected for tests.
    """

    url: str | None = None
    model: str | None = None
    api_key: str | None = None
    caps: RobotCapabilities = field(default_factory=RobotCapabilities)
    timeout: float = 20.0
    max_retries: int = 3
    transport: httpx.BaseTransport | None = None

    def __post_init__(self) -> None:
        self.url = self.url or os.environ.get(ENV_URL)
        self.model = self.model or os.environ.get(ENV_MODEL)
        self.api_key = self.api_key or os.environ.get(ENV_KEY)

    @property
    def configured(self) -> bool:
        return bool(self.url and self.model)

    def parse(self, instruction: str) -> ParseOutcome:
        if not instruction or not instruction.strip():
            return ParseOutcome.rejection("empty instruction")
        if not self.configured:
            return ParseOutcome.rejection("endpoint unavailable")
        endpoint = self.url.rstrip("/")
        if not endpoint.endswith("/chat/completions"):
            endpoint += "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": _load_prompt(self.caps)},
                {"role": "user", "content": instruction.strip()},
            ],
        }
        client = httpx.Client(transport=self.transport, timeout=self.timeout)
        try:
            for _ in range(self.max_retries):
                try:
                    resp = client.post(endpoint, json=body, headers=headers)
                    resp.raise_for_status()
                    content = resp.json()["choices"][0]["message"]["content"]
                except (httpx.HTTPError, KeyError, IndexError, ValueError):
                    return ParseOutcome.rejection("endpoint unavailable")
                try:
                    data = _extract_json(content)
                    if "clarify" in {k.lower() for k in data}:
                        question = next(v for k, v in data.items() if k.lower() == "clarify")
                        return ParseOutcome.clarification(str(question))
                    cfg = config_from_template(data, instruction, self.caps)
                    return ParseOutcome.parsed(cfg)
                except (ValueError, KeyError, TypeError):
                    continue  # malformed or invariant-violating; retry
            return ParseOutcome.rejection("unparseable")
        finally:
            client.close()


def parse_llm(instruction: str, context: RobotCapabilities | None = None, **kwargs) -> ParseOutcome:
    return LlmParser(caps=context or RobotCapabilities(), **kwargs).parse(instruction)
