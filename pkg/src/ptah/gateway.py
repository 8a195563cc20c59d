"""Uniform access to text/vision model backends behind per-role routing.

The gateway is the only place model calls happen. Every call is logged
(write-ahead: the request record lands in logs/gateway.jsonl before the
response is returned to the caller) and hashed so live runs can be turned
into replay fixtures. Three backends ship:

* ``HttpBackend``      — OpenAI-compatible chat-completions endpoint.
* ``ReplayBackend``    — responses keyed by request hash (record/replay).
* ``ScriptedBackend``  — ordered response queues with substring routing,
                         used by the shipped mock transcripts.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import jsonschema

from .clock import SystemClock
from .errors import (
    CapabilityError,
    MissingFixtureError,
    StructuredOutputError,
    TransportError,
)

ROLES = ("planner", "researcher", "writer", "verifier", "selector", "judge")

REPAIR_ROUNDS = 3  # total attempts = 1 + REPAIR_ROUNDS


@dataclass(frozen=True)
class Message:
    author: str  # system | user | assistant
    text: str
    images: tuple = ()  # asset ids or file paths

    def to_dict(self) -> dict:
        return {"author": self.author, "text": self.text, "images": list(self.images)}


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.7
    max_tokens: int = 4096
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens, "seed": self.seed}


@dataclass(frozen=True)
class ModelRequest:
    role_hint: str
    messages: tuple  # tuple[Message, ...]
    decode: DecodeParams = DecodeParams()

    def __post_init__(self):
        if self.role_hint not in ROLES:
            raise ValueError(f"unknown role_hint {self.role_hint!r}")
        if not self.messages:
            raise ValueError("request needs at least one message")

    def has_images(self) -> bool:
        return any(m.images for m in self.messages)

    def joined_text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ModelResponse:
    text: str
    usage: Usage = Usage()
    backend_id: str = ""
    latency_ms: int = 0
    stop_reason: str = "stop"

    def __post_init__(self):
        if not self.text and self.stop_reason == "stop":
            raise ValueError("empty response text requires an explicit non-stop reason")


def request_hash(request: ModelRequest) -> str:
    """Stable hash over role + messages (timestamps never enter messages)."""
    payload = {
        "role_hint": request.role_hint,
        "messages": [m.to_dict() for m in request.messages],
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class ReplayBackend:
    """Fixture lookup table keyed by request hash."""

    def __init__(self, responses: dict, strict: bool = True,
                 vision: bool = True, backend_id: str = "replay"):
        self.responses = dict(responses)
        self.strict = strict
        self.vision = vision
        self.backend_id = backend_id

    def complete(self, request: ModelRequest) -> ModelResponse:
        h = request_hash(request)
        if h not in self.responses:
            if self.strict:
                raise MissingFixtureError(f"no replay fixture for request hash {h}")
            return ModelResponse(text="", stop_reason="missing-fixture", backend_id=self.backend_id)
        return ModelResponse(text=self.responses[h], backend_id=self.backend_id)


@dataclass
class ScriptRoute:
    """One scripted queue: matches a role plus optional prompt substrings.

    ``contains`` may be a single substring or a list that must all appear.
    """

    role: str
    script: list
    contains: object = None  # None | str | list[str]
    cursor: int = 0

    def matches(self, role: str, text: str) -> bool:
        if self.role != role:
            return False
        if self.contains is None:
            return True
        needles = [self.contains] if isinstance(self.contains, str) else self.contains
        return all(n in text for n in needles)


class ScriptedBackend:
    """Deterministic response queues for mock runs.

    Routes are tried in declaration order; the first route whose role
    matches and whose ``contains`` substring(s) appear in the request text
    serves the next response from its queue. Routing by content keeps
    concurrent per-section agents deterministic.
    """

    def __init__(self, routes: list, vision: bool = True, backend_id: str = "scripted"):
        self.routes = routes
        self.vision = vision
        self.backend_id = backend_id
        self._lock = threading.Lock()

    @classmethod
    def from_transcript(cls, transcript: dict, **kw) -> "ScriptedBackend":
        """Build from the on-disk transcript format.

        {"routes": [{"role": "...", "contains": "...", "script": ["...", ...]}, ...]}
        """
        routes = [
            ScriptRoute(role=r["role"], contains=r.get("contains"), script=list(r["script"]))
            for r in transcript["routes"]
        ]
        return cls(routes, **kw)

    def complete(self, request: ModelRequest) -> ModelResponse:
        text = request.joined_text()
        with self._lock:
            for route in self.routes:
                if not route.matches(request.role_hint, text):
                    continue
                if route.cursor >= len(route.script):
                    raise MissingFixtureError(
                        f"scripted queue exhausted for role={route.role} "
                        f"contains={route.contains!r}"
                    )
                response = route.script[route.cursor]
                route.cursor += 1
                return ModelResponse(text=response, backend_id=self.backend_id)
        raise MissingFixtureError(
            f"no scripted route matches role={request.role_hint}"
        )


class HttpBackend:
    """OpenAI-compatible chat-completions client.

    ``asset_resolver`` maps an image ref from a message to (bytes, mime)
    so vision inputs can be inlined as data URLs.
    """

    def __init__(self, endpoint: str, model: str, api_key: str = "",
                 vision: bool = False, timeout_s: float = 120.0,
                 asset_resolver: Optional[Callable] = None,
                 backend_id: Optional[str] = None):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.vision = vision
        self.timeout_s = timeout_s
        self.asset_resolver = asset_resolver
        self.backend_id = backend_id or f"http:{model}"

    def _content_parts(self, message: Message):
        if not message.images:
            return message.text
        parts = [{"type": "text", "text": message.text}]
        for ref in message.images:
            if self.asset_resolver is None:
                raise CapabilityError("no asset resolver configured for image inputs")
            data, mime = self.asset_resolver(ref)
            import base64

            b64 = base64.b64encode(data).decode("ascii")
            parts.append({"type": "image_url",
                          "image_url": {"url": f"data:{mime};base64,{b64}"}})
        return parts

    def complete(self, request: ModelRequest) -> ModelResponse:
        import requests

        body = {
            "model": self.model,
            "messages": [
                {"role": {"system": "system", "user": "user", "assistant": "assistant"}[m.author],
                 "content": self._content_parts(m)}
                for m in request.messages
            ],
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
        }
        if request.decode.seed is not None:
            body["seed"] = request.decode.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(f"{self.endpoint}/chat/completions", json=body,
                                 headers=headers, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"model endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"model endpoint returned {resp.status_code}: {resp.text[:500]}")
        data = resp.json()
        choice = data["choices"][0]
        usage = data.get("usage", {})
        return ModelResponse(
            text=choice["message"].get("content") or "",
            usage=Usage(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
            backend_id=self.backend_id,
            stop_reason=choice.get("finish_reason", "stop") or "stop",
        )


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def extract_json(text: str):
    """Pull the first JSON value out of a model reply.

    Accepts raw JSON, fenced blocks, or JSON embedded in prose.
    Raises ValueError when nothing parses.
    """
    candidates = [text.strip()]
    for m in _FENCE_RE.finditer(text):
        candidates.insert(0, m.group(1).strip())
    decoder = json.JSONDecoder()
    for cand in candidates:
        if not cand:
            continue
        try:
            return json.loads(cand)
        except json.JSONDecodeError:
            pass
        start = min((i for i in (cand.find("{"), cand.find("[")) if i >= 0), default=-1)
        if start >= 0:
            try:
                value, _ = decoder.raw_decode(cand[start:])
                return value
            except json.JSONDecodeError:
                pass
    raise ValueError("no JSON value found in model reply")


@dataclass
class Attempt:
    text: str
    errors: list = field(default_factory=list)


class ModelGateway:
    """Routes requests to per-role backends with logging and rate capping."""

    def __init__(self, backends: dict, log_sink: Optional[Callable] = None,
                 clock=None, max_inflight: int = 8):
        self.backends = dict(backends)
        self.log_sink = log_sink
        self.clock = clock or SystemClock()
        self._inflight = threading.Semaphore(max_inflight)

    def backend_for(self, role_hint: str):
        if role_hint not in self.backends:
            raise CapabilityError(f"no backend configured for role {role_hint!r}")
        return self.backends[role_hint]

    def _log(self, record: dict) -> None:
        if self.log_sink is not None:
            self.log_sink(record)

    def complete(self, request: ModelRequest) -> ModelResponse:
        backend = self.backend_for(request.role_hint)
        if request.has_images() and not getattr(backend, "vision", False):
            raise CapabilityError(
                f"backend {getattr(backend, 'backend_id', '?')} for role "
                f"{request.role_hint} cannot accept image inputs"
            )
        h = request_hash(request)
        # Write-ahead: the request is on disk before the response is used.
        self._log({"event": "request", "hash": h, "role": request.role_hint,
                   "backend": getattr(backend, "backend_id", "?"),
                   "at": self.clock.now_iso()})
        started = time.monotonic()
        with self._inflight:
            response = backend.complete(request)
        latency_ms = int((time.monotonic() - started) * 1000)
        self._log({"event": "response", "hash": h, "role": request.role_hint,
                   "chars": len(response.text), "latency_ms": latency_ms,
                   "at": self.clock.now_iso()})
        return response

    def complete_structured(self, request: ModelRequest, schema: dict,
                            post_validate: Optional[Callable] = None,
                            repairs: int = REPAIR_ROUNDS):
        """Completion that must validate against ``schema``.

        On failure the validator messages are appended as a user message and
        the request retried, up to ``repairs`` extra rounds. ``post_validate``
        may raise ValueError with further findings that join the repair loop
        (directive grammar, cross-reference checks). Returns the parsed value.
        """
        validator = jsonschema.Draft202012Validator(schema)
        attempts = []
        current = request
        for _ in range(1 + repairs):
            response = self.complete(current)
            errors = []
            value = None
            try:
                value = extract_json(response.text)
            except ValueError as exc:
                errors.append(str(exc))
            if value is not None:
                errors.extend(
                    f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                    for e in validator.iter_errors(value)
                )
            if value is not None and not errors and post_validate is not None:
                try:
                    post_validate(value)
                except ValueError as exc:
                    errors.append(str(exc))
            attempts.append(Attempt(text=response.text, errors=errors))
            if not errors:
                return value
            feedback = (
                "Your previous reply failed validation:\n- "
                + "\n- ".join(errors)
                + "\nReply again with corrected JSON only."
            )
            current = ModelRequest(
                role_hint=current.role_hint,
                messages=current.messages
                + (Message("assistant", response.text), Message("user", feedback)),
                decode=current.decode,
            )
        all_errors = [e for a in attempts for e in a.errors]
        raise StructuredOutputError(
            f"output failed validation after {len(attempts)} attempts: "
            + "; ".join(all_errors[:8]),
            attempts=attempts,
        )
