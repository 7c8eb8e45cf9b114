import json

import httpx
import jsonschema
import pytest

from semsafe.language import (
    ConfigSet,
    Kind,
    LlmParser,
    RobotCapabilities,
    SafetyConfig,
    add_config,
    config_id,
    load_schema,
    parse_rule_based,
    remove_config,
)

CAPS = RobotCapabilities()


def test_keep_distance_from_cars():
    out = parse_rule_based("keep 0.25 m away from cars")
    assert out.is_parsed
    cfg = out.config
    assert cfg.kind is Kind.SPATIAL_EXCLUSION
    assert cfg.obj == "cars"
    assert cfg.buffer == pytest.approx(0.25)


def test_dont_go_under_standing_desk():
    out = parse_rule_based("Don't go under the standing desk")
    assert out.is_parsed
    assert out.config.kind is Kind.SPATIAL_EXCLUSION
    assert out.config.obj == "standing desk"
    assert out.config.buffer == 0.0


def test_unmatched_text_asks_for_clarification():
    out = parse_rule_based("please behave")
    assert out.clarify is not None


def test_empty_instruction_rejected():
    assert parse_rule_based("").rejected == "empty instruction"
    assert parse_rule_based("   ").rejected == "empty instruction"


# The twelve instruction texts that appear in the evaluation corpus, with
# the constraint kind each one must map to.
PAPER_FIXTURES = [
    ("avoid the swimming pool", Kind.SPATIAL_EXCLUSION),
    ("do not go beneath tables", Kind.SPATIAL_EXCLUSION),
    ("keep 0.25 m away from cars", Kind.SPATIAL_EXCLUSION),
    ("reduce speed near the sofa", Kind.HYBRID),
    ("slow down on the carpet", Kind.HYBRID),
    ("be extra careful near stairs", Kind.HYBRID),
    ("be quiet around the bed", Kind.HYBRID),
    ("move slowly near the crib", Kind.HYBRID),
    ("do not go under tables", Kind.SPATIAL_EXCLUSION),
    ("move slowly near the bed", Kind.HYBRID),
    ("avoid the tree", Kind.SPATIAL_EXCLUSION),
    ("Don't go under the standing desk", Kind.SPATIAL_EXCLUSION),
]


@pytest.mark.parametrize("text,kind", PAPER_FIXTURES)
def test_instruction_corpus_kinds(text, kind):
    out = parse_rule_based(text)
    assert out.is_parsed, f"{text!r} failed to parse: {out}"
    assert out.config.kind is kind


def test_quiet_sets_both_limits():
    cfg = parse_rule_based("be quiet around the bed").config
    assert cfg.vel_max == pytest.approx(0.45)
    assert cfg.angular_vel_max == pytest.approx(0.3)
    assert cfg.buffer == pytest.approx(0.75)


def test_on_preposition_means_containment():
    cfg = parse_rule_based("slow down on the carpet").config
    assert cfg.buffer == 0.0
    assert cfg.vel_max == pytest.approx(0.45)
    assert cfg.angular_vel_max is None


def test_explicit_speed_and_global_cap():
    cfg = parse_rule_based("slow down near the crib below 0.4 m/s").config
    assert cfg.vel_max == pytest.approx(0.4)
    cfg = parse_rule_based("max speed 0.5").config
    assert cfg.kind is Kind.KINEMATIC_MODULATION
    assert cfg.obj == ""
    assert cfg.vel_max == pytest.approx(0.5)
    cfg = parse_rule_based("never exceed 0.8 m/s").config
    assert cfg.vel_max == pytest.approx(0.8)


def test_requested_limits_clamped_to_capabilities():
    cfg = parse_rule_based("max speed 9").config
    assert cfg.vel_max == pytest.approx(CAPS.v_max)


def test_parser_is_deterministic():
    for text, _ in PAPER_FIXTURES:
        a, b = parse_rule_based(text), parse_rule_based(text)
        assert a == b


def test_round_trip_validates_against_published_schema():
    schema = load_schema()
    for text, _ in PAPER_FIXTURES:
        cfg = parse_rule_based(text).config
        jsonschema.validate(cfg.to_template_dict(), schema)


def test_schema_rejects_kind_field_violations():
    schema = load_schema()
    bad = {"type": "spatial_exclusion", "obj": "", "buffer": 0,
           "vel max": None, "angular vel max": None}
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, schema)
    bad = {"type": "kinematic_modulation", "obj": "", "buffer": 0,
           "vel max": None, "angular vel max": None}
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, schema)


def test_published_schema_copy_matches_package_asset():
    from pathlib import Path

    repo_copy = Path(__file__).resolve().parents[1] / "schema" / "safety_config.schema.json"
    assert repo_copy.exists(), "schema/safety_config.schema.json must ship in the repo"
    assert json.loads(repo_copy.read_text()) == load_schema()


def test_grammar_fuzz_produces_valid_configs(rng):
    objects = ["sofa", "standing desk", "swimming pool", "old oak tree", "tv stand"]
    templates = [
        "avoid the {o}",
        "don't go under the {o}",
        "keep {d} m away from {o}",
        "stay out of the {o}",
        "move slowly near the {o}",
        "be quiet around the {o}",
        "slow down on the {o}",
        "max speed {v}",
        "never exceed {v} m/s",
    ]
    schema = load_schema()
    for _ in range(300):
        t = templates[rng.integers(len(templates))]
        text = t.format(o=objects[rng.integers(len(objects))],
                        d=round(float(rng.uniform(0.05, 2.0)), 2),
                        v=round(float(rng.uniform(0.1, 1.4)), 2))
        out = parse_rule_based(text)
        assert out.is_parsed, text
        jsonschema.validate(out.config.to_template_dict(), schema)


def _mk(kind=Kind.SPATIAL_EXCLUSION, obj="x", **kw) -> SafetyConfig:
    text = kw.pop("source_text", f"{kind.value} {obj} {sorted(kw.items())}")
    return SafetyConfig(kind=kind, obj=obj, source_text=text, id=config_id(text), **kw)


def test_config_invariants_enforced():
    with pytest.raises(ValueError):
        SafetyConfig(kind=Kind.SPATIAL_EXCLUSION, obj="", id="a")
    with pytest.raises(ValueError):
        SafetyConfig(kind=Kind.SPATIAL_EXCLUSION, obj="x", vel_max=0.5, id="a")
    with pytest.raises(ValueError):
        SafetyConfig(kind=Kind.KINEMATIC_MODULATION, obj="y", vel_max=0.5, id="a")
    with pytest.raises(ValueError):
        SafetyConfig(kind=Kind.HYBRID, obj="x", id="a")
    with pytest.raises(ValueError):
        SafetyConfig(kind=Kind.SPATIAL_EXCLUSION, obj="x", buffer=-0.1, id="a")


def test_add_to_empty_set():
    s = add_config(ConfigSet(cap=8), _mk(obj="a"))
    assert len(s.configs) == 1


def test_fifo_eviction_at_cap():
    s = ConfigSet(cap=8)
    for i in range(9):
        s = add_config(s, _mk(obj=f"obj{i}"))
    assert len(s.configs) == 8
    objs = [c.obj for c in s.configs]
    assert "obj0" not in objs
    assert objs[-1] == "obj8"


def test_duplicate_id_replaces_in_place():
    first = _mk(obj="sofa", source_text="avoid the sofa")
    second = SafetyConfig(kind=Kind.SPATIAL_EXCLUSION, obj="sofa", buffer=0.5,
                          source_text="avoid the sofa", id=first.id)
    s = add_config(add_config(add_config(ConfigSet(), _mk(obj="q")), first), second)
    assert [c.buffer for c in s.configs if c.obj == "sofa"] == [0.5]
    assert [c.obj for c in s.configs] == ["q", "sofa"]


def test_remove_config_cases():
    only = _mk(obj="a")
    assert remove_config(add_config(ConfigSet(), only), only.id).configs == ()
    s = ConfigSet()
    for o in ("a", "b", "c"):
        s = add_config(s, _mk(obj=o))
    assert remove_config(s, "missing") == s
    trimmed = remove_config(s, s.configs[1].id)
    assert [c.obj for c in trimmed.configs] == ["a", "c"]


# --- LLM client --------------------------------------------------------------

def _mock_parser(handler) -> LlmParser:
    return LlmParser(url="http://llm.test/v1", model="test-model", api_key="k",
                     transport=httpx.MockTransport(handler))


def _chat_response(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def test_llm_parse_valid_config():
    def handler(request):
        assert request.url.path.endswith("/chat/completions")
        body = json.loads(request.content)
        assert body["model"] == "test-model"
        assert "swimming pool" in body["messages"][1]["content"]
        return _chat_response(json.dumps({
            "type": "spatial_exclusion", "obj": "swimming pool", "buffer": 0,
            "vel max": None, "angular vel max": None}))

    out = _mock_parser(handler).parse("avoid the swimming pool")
    assert out.is_parsed
    assert out.config.obj == "swimming pool"
    assert out.config.kind is Kind.SPATIAL_EXCLUSION


def test_llm_parse_hybrid_with_fences():
    def handler(request):
        return _chat_response(
            "```json\n{\"type\": \"hybrid\", \"obj\": \"sofa\", \"buffer\": 0.75, "
            "\"vel max\": 0.45, \"angular vel max\": null}\n```"
        )

    out = _mock_parser(handler).parse("reduce speed near the sofa")
    assert out.is_parsed
    assert out.config.kind is Kind.HYBRID
    assert out.config.vel_max == pytest.approx(0.45)


def test_llm_clarification_passthrough():
    def handler(request):
        return _chat_response(json.dumps({"clarify": "Which bed do you mean?"}))

    out = _mock_parser(handler).parse("be quiet around the bed")
    assert out.clarify == "Which bed do you mean?"


def test_llm_retries_then_rejects_unparseable():
    calls = []

    def handler(request):
        calls.append(1)
        return _chat_response("not json at all")

    out = _mock_parser(handler).parse("avoid the pool")
    assert out.rejected == "unparseable"
    assert len(calls) == 3


def test_llm_network_failure_rejected():
    def handler(request):
        raise httpx.ConnectError("boom")

    out = _mock_parser(handler).parse("avoid the pool")
    assert out.rejected == "endpoint unavailable"


def test_llm_unconfigured_rejected(monkeypatch):
    for var in ("SEMSAFE_LLM_URL", "SEMSAFE_LLM_MODEL", "SEMSAFE_LLM_KEY"):
        monkeypatch.delenv(var, raising=False)
    assert LlmParser().parse("avoid the pool").rejected == "endpoint unavailable"


def test_llm_invalid_limits_retry_then_reject():
    def handler(request):
        return _chat_response(json.dumps({
            "type": "hybrid", "obj": "sofa", "buffer": 0,
            "vel max": -1.0, "angular vel max": None}))

    out = _mock_parser(handler).parse("reduce speed near the sofa")
    assert out.rejected == "unparseable"
