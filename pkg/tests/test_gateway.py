"""Gateway behavior: routing, capability checks, logging, structured repair."""

import json

import pytest

from ptah.errors import CapabilityError, MissingFixtureError, StructuredOutputError
from ptah.gateway import (
    Message,
    ModelGateway,
    ModelRequest,
    ModelResponse,
    ReplayBackend,
    ScriptedBackend,
    ScriptRoute,
    extract_json,
    request_hash,
)

from conftest import scripted_gateway


def _req(text="hello", role="planner", images=()):
    return ModelRequest(role_hint=role, messages=(Message("user", text, images=tuple(images)),))


def test_request_validation():
    with pytest.raises(ValueError):
        ModelRequest(role_hint="chef", messages=(Message("user", "x"),))
    with pytest.raises(ValueError):
        ModelRequest(role_hint="planner", messages=())


def test_response_requires_stop_reason_when_empty():
    with pytest.raises(ValueError):
        ModelResponse(text="")
    ModelResponse(text="", stop_reason="length")  # explicit reason is fine


def test_request_hash_ignores_decode_params():
    from ptah.gateway import DecodeParams

    a = ModelRequest(role_hint="planner", messages=(Message("user", "x"),),
                     decode=DecodeParams(temperature=0.0))
    b = ModelRequest(role_hint="planner", messages=(Message("user", "x"),),
                     decode=DecodeParams(temperature=0.9))
    assert request_hash(a) == request_hash(b)
    c = ModelRequest(role_hint="planner", messages=(Message("user", "y"),))
    assert request_hash(c) != request_hash(a)


def test_replay_backend_verbatim_and_strict():
    req = _req("what is up")
    backend = ReplayBackend({request_hash(req): "fixture text"})
    assert backend.complete(req).text == "fixture text"
    with pytest.raises(MissingFixtureError):
        backend.complete(_req("unknown"))


def test_replay_determinism_over_sequences():
    reqs = [_req(f"q{i}") for i in range(4)]
    mapping = {request_hash(r): f"a{i}" for i, r in enumerate(reqs)}
    b1 = ReplayBackend(mapping)
    b2 = ReplayBackend(mapping)
    assert [b1.complete(r).text for r in reqs] == [b2.complete(r).text for r in reqs]


def test_scripted_routing_and_exhaustion():
    backend = ScriptedBackend([
        ScriptRoute(role="writer", contains="alpha", script=["A1", "A2"]),
        ScriptRoute(role="writer", contains=None, script=["fallback"]),
    ])
    assert backend.complete(_req("about alpha stuff", role="writer")).text == "A1"
    assert backend.complete(_req("no match here", role="writer")).text == "fallback"
    assert backend.complete(_req("alpha again", role="writer")).text == "A2"
    with pytest.raises(MissingFixtureError):
        backend.complete(_req("alpha third", role="writer"))


def test_scripted_multi_substring_routes():
    backend = ScriptedBackend([
        ScriptRoute(role="writer", contains=["alpha", "beta"], script=["both"]),
        ScriptRoute(role="writer", contains="alpha", script=["only-a"]),
    ])
    assert backend.complete(_req("alpha without the second", role="writer")).text == "only-a"
    assert backend.complete(_req("alpha and beta", role="writer")).text == "both"


def test_vision_capability_error():
    gw = scripted_gateway([("writer", None, ["ok"])])
    gw.backends["writer"].vision = False
    with pytest.raises(CapabilityError):
        gw.complete(_req("draw", role="writer", images=("asset1",)))


def test_write_ahead_logging(workspace):
    gw = scripted_gateway([("planner", None, ["pong"])], workspace=workspace)
    gw.complete(_req("ping"))
    records = workspace.read_log("gateway")
    events = [(r["event"], r["hash"]) for r in records]
    assert events[0][0] == "request" and events[1][0] == "response"
    assert events[0][1] == events[1][1]


def test_extract_json_variants():
    assert extract_json('{"a": 1}') == {"a": 1}
    assert extract_json('```json\n{"a": 1}\n```') == {"a": 1}
    assert extract_json('Sure, here you go: {"a": [1, 2]} hope that helps') == {"a": [1, 2]}
    with pytest.raises(ValueError):
        extract_json("no json at all")


PLAN_MINI_SCHEMA = {
    "type": "object",
    "properties": {
        "overview": {"type": "string"},
        "sections": {"type": "array", "minItems": 1},
    },
    "required": ["overview", "sections"],
    "additionalProperties": False,
}


def test_structured_repair_then_success():
    bad = json.dumps({"overview": "x", "sections": []})
    good = json.dumps({"overview": "x", "sections": [{"id": "s1"}]})
    gw = scripted_gateway([("planner", None, [bad, good])])
    value = gw.complete_structured(_req("plan please"), PLAN_MINI_SCHEMA)
    assert value["sections"] == [{"id": "s1"}]


def test_structured_repair_feedback_mentions_validator_error():
    bad = json.dumps({"overview": "x", "sections": []})
    good = json.dumps({"overview": "x", "sections": [1]})
    backend = ScriptedBackend([ScriptRoute(role="planner", contains=None,
                                           script=[bad, good])])
    seen = []
    original = backend.complete

    def spy(request):
        seen.append(request.joined_text())
        return original(request)

    backend.complete = spy
    gw = ModelGateway({"planner": backend})
    gw.complete_structured(_req("plan please"), PLAN_MINI_SCHEMA)
    assert "minItems" in seen[1] or "non-empty" in seen[1] or "[]" in seen[1]


def test_structured_exhaustion_records_all_attempts():
    gw = scripted_gateway([("planner", None, ["not json"] * 4)])
    with pytest.raises(StructuredOutputError) as exc_info:
        gw.complete_structured(_req("plan"), PLAN_MINI_SCHEMA)
    assert len(exc_info.value.attempts) == 4  # 1 initial + 3 repairs


def test_structured_post_validate_joins_repair_loop():
    ok_schema = {"type": "object", "properties": {"n": {"type": "integer"}},
                 "required": ["n"], "additionalProperties": False}
    gw = scripted_gateway([("planner", None, ['{"n": 1}', '{"n": 2}'])])

    def post(value):
        if value["n"] != 2:
            raise ValueError("n must be 2")

    assert gw.complete_structured(_req("go"), ok_schema, post_validate=post) == {"n": 2}
