"""Core domain types: queries, content blocks, reports, trajectories, verdicts.

Every type round-trips through plain JSON dicts via ``to_dict``/``from_dict``
so intermediate artifacts stay inspectable on disk. ``canonical_json`` is the
single serializer used for persistence: sorted keys, two-space indent,
UTF-8 text, trailing newline. Arrays keep their order, so block order is
stable under round-trip by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .errors import IntegrityError

RUBRIC_MIN = 1
RUBRIC_MAX = 5

VISUAL_ORIGINS = ("reference", "search", "generated")
VERDICT_STAGES = ("plan", "package", "writing")


def canonical_json(value: Any) -> str:
    """Serialize to the canonical on-disk JSON form (diffable, byte-stable)."""
    return json.dumps(value, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def canonical_json_bytes(value: Any) -> bytes:
    return canonical_json(value).encode("utf-8")


# ---------------------------------------------------------------------------
# Query and content blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Query:
    """Plain-text research request."""

    text: str
    id: str
    language: str = "en"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty after trimming")

    def to_dict(self) -> dict:
        return {"text": self.text, "id": self.id, "language": self.language}

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        return cls(text=d["text"], id=d["id"], language=d.get("language", "en"))


@dataclass(frozen=True)
class TextBlock:
    markdown: str
    section_id: str

    kind = "text"

    def to_dict(self) -> dict:
        return {"kind": "text", "markdown": self.markdown, "section_id": self.section_id}


@dataclass(frozen=True)
class VisualBlock:
    asset_id: str
    caption: str
    role: str
    section_id: str
    origin: str  # reference | search | generated

    kind = "visual"

    def to_dict(self) -> dict:
        return {
            "kind": "visual",
            "asset_id": self.asset_id,
            "caption": self.caption,
            "role": self.role,
            "section_id": self.section_id,
            "origin": self.origin,
        }


ContentBlock = Union[TextBlock, VisualBlock]


def block_from_dict(d: dict) -> ContentBlock:
    kind = d.get("kind")
    if kind == "text":
        return TextBlock(markdown=d["markdown"], section_id=d["section_id"])
    if kind == "visual":
        return VisualBlock(
            asset_id=d["asset_id"],
            caption=d.get("caption", ""),
            role=d.get("role", ""),
            section_id=d["section_id"],
            origin=d.get("origin", "reference"),
        )
    raise ValueError(f"unknown block kind: {kind!r}")


# ---------------------------------------------------------------------------
# Citations and numeric facts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Citation:
    id: str
    url: str
    title: str
    quote: Optional[str] = None
    accessed_at: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "url": self.url,
            "title": self.title,
            "quote": self.quote,
            "accessed_at": self.accessed_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Citation":
        return cls(
            id=d["id"],
            url=d["url"],
            title=d.get("title", ""),
            quote=d.get("quote"),
            accessed_at=d.get("accessed_at", ""),
        )


@dataclass(frozen=True)
class NumericFact:
    """A number pulled from a source. Value kept as a decimal string so the
    consistency check never fights float formatting."""

    name: str
    value: str
    unit: str
    source: str  # citation id

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "unit": self.unit, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "NumericFact":
        return cls(name=d["name"], value=str(d["value"]), unit=d.get("unit", ""), source=d["source"])


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class Issue:
    """A single validation finding; ``block_index`` is None for report-level issues."""

    code: str
    message: str
    block_index: Optional[int] = None

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "block_index": self.block_index}


@dataclass
class Report:
    """Ordered interleaved text/visual blocks plus the reference list."""

    title: str
    blocks: list = field(default_factory=list)
    references: list = field(default_factory=list)  # list[Citation]

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "blocks": [b.to_dict() for b in self.blocks],
            "references": [c.to_dict() for c in self.references],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(
            title=d.get("title", ""),
            blocks=[block_from_dict(b) for b in d.get("blocks", [])],
            references=[Citation.from_dict(c) for c in d.get("references", [])],
        )

    def visual_blocks(self) -> list:
        return [(i, b) for i, b in enumerate(self.blocks) if isinstance(b, VisualBlock)]

    def text_blocks(self) -> list:
        return [(i, b) for i, b in enumerate(self.blocks) if isinstance(b, TextBlock)]


def validate_report(report: Report, asset_store=None) -> list:
    """Check Report invariants; returns issues instead of raising.

    ``asset_store`` is anything with ``has_asset(asset_id) -> bool``; when
    given, dangling visual references are flagged with their block index.
    """
    issues: list = []
    has_text = False
    for i, block in enumerate(report.blocks):
        if isinstance(block, TextBlock):
            has_text = True
            if not block.markdown.strip():
                issues.append(Issue("empty-text", "text block has no content", i))
        elif isinstance(block, VisualBlock):
            if block.origin not in VISUAL_ORIGINS:
                issues.append(Issue("bad-origin", f"unknown origin {block.origin!r}", i))
            if asset_store is not None and not asset_store.has_asset(block.asset_id):
                issues.append(
                    Issue("dangling-asset", f"asset {block.asset_id} not in store", i)
                )
        else:
            issues.append(Issue("bad-block", f"unknown block type {type(block).__name__}", i))
    if not has_text:
        issues.append(Issue("no-text", "report contains no text blocks", None))
    seen_cite_ids = set()
    for cit in report.references:
        if cit.id in seen_cite_ids:
            issues.append(Issue("dup-citation", f"duplicate citation id {cit.id}", None))
        seen_cite_ids.add(cit.id)
    return issues


# ---------------------------------------------------------------------------
# Tool calls and trajectory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict
    step_index: int = 0

    def to_dict(self) -> dict:
        return {"tool": self.tool, "args": self.args, "step_index": self.step_index}

    @classmethod
    def from_dict(cls, d: dict) -> "ToolCall":
        return cls(tool=d["tool"], args=d.get("args", {}), step_index=d.get("step_index", 0))


@dataclass(frozen=True)
class ToolObservation:
    tool: str
    payload: dict
    asset_ids: tuple = ()
    fetched_urls: tuple = ()

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "payload": self.payload,
            "asset_ids": list(self.asset_ids),
            "fetched_urls": list(self.fetched_urls),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToolObservation":
        return cls(
            tool=d["tool"],
            payload=d.get("payload", {}),
            asset_ids=tuple(d.get("asset_ids", [])),
            fetched_urls=tuple(d.get("fetched_urls", [])),
        )


@dataclass(frozen=True)
class TrajectoryStep:
    """One reasoning step: thought, optional tool call, its observation."""

    index: int
    thought: str
    action: Optional[ToolCall] = None
    observation: Optional[ToolObservation] = None
    timestamp: str = ""

    def __post_init__(self):
        if (self.action is None) != (self.observation is None):
            raise ValueError("observation present iff action present")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "thought": self.thought,
            "action": self.action.to_dict() if self.action else None,
            "observation": self.observation.to_dict() if self.observation else None,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryStep":
        return cls(
            index=d["index"],
            thought=d.get("thought", ""),
            action=ToolCall.from_dict(d["action"]) if d.get("action") else None,
            observation=ToolObservation.from_dict(d["observation"]) if d.get("observation") else None,
            timestamp=d.get("timestamp", ""),
        )


def validate_trajectory(steps: list) -> list:
    """Indices must increase strictly from 1."""
    issues = []
    for pos, step in enumerate(steps):
        expected = pos + 1
        if step.index != expected:
            issues.append(Issue("bad-step-index", f"step {pos} has index {step.index}, expected {expected}"))
    return issues


# ---------------------------------------------------------------------------
# Working state and research state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageArtifact:
    """Any intermediate artifact tagged with the stage that produced it."""

    stage: str
    kind: str
    payload: Any

    def to_dict(self) -> dict:
        return {"stage": self.stage, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "StageArtifact":
        return cls(stage=d["stage"], kind=d["kind"], payload=d["payload"])


@dataclass
class WorkingState:
    artifacts: list = field(default_factory=list)  # list[StageArtifact]

    def to_dict(self) -> dict:
        return {"artifacts": [a.to_dict() for a in self.artifacts]}

    @classmethod
    def from_dict(cls, d: dict) -> "WorkingState":
        return cls(artifacts=[StageArtifact.from_dict(a) for a in d.get("artifacts", [])])


@dataclass
class ResearchState:
    query: Query
    working: WorkingState = field(default_factory=WorkingState)
    trajectory: list = field(default_factory=list)  # list[TrajectoryStep]

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "working": self.working.to_dict(),
            "trajectory": [s.to_dict() for s in self.trajectory],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResearchState":
        return cls(
            query=Query.from_dict(d["query"]),
            working=WorkingState.from_dict(d.get("working", {"artifacts": []})),
            trajectory=[TrajectoryStep.from_dict(s) for s in d.get("trajectory", [])],
        )


def _iter_asset_refs(payload: Any):
    """Yield asset ids referenced from visual blocks nested inside a payload."""
    if isinstance(payload, dict):
        if payload.get("kind") == "visual" and "asset_id" in payload:
            yield payload["asset_id"]
        for v in payload.values():
            yield from _iter_asset_refs(v)
    elif isinstance(payload, list):
        for v in payload:
            yield from _iter_asset_refs(v)


def serialize_state(state: ResearchState, asset_store=None) -> bytes:
    """Canonical JSON bytes for a research state.

    When an asset store is supplied, any visual block buried in the working
    state must resolve; otherwise the state cannot be faithfully restored.
    """
    d = state.to_dict()
    if asset_store is not None:
        for artifact in state.working.artifacts:
            for asset_id in _iter_asset_refs(artifact.payload):
                if not asset_store.has_asset(asset_id):
                    raise IntegrityError(f"state references missing asset {asset_id}")
    return canonical_json_bytes(d)


def deserialize_state(data: bytes) -> ResearchState:
    return ResearchState.from_dict(json.loads(data.decode("utf-8")))


# ---------------------------------------------------------------------------
# Verifier output types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RubricScore:
    """Integer Likert scores per rubric dimension, 1..5 inclusive."""

    dimensions: tuple  # tuple[(name, score), ...] to stay hashable/ordered

    scale_min = RUBRIC_MIN
    scale_max = RUBRIC_MAX

    def __post_init__(self):
        for name, score in self.dimensions:
            if not isinstance(score, int) or not (RUBRIC_MIN <= score <= RUBRIC_MAX):
                raise ValueError(f"rubric score {name}={score!r} outside [{RUBRIC_MIN},{RUBRIC_MAX}]")

    @classmethod
    def from_mapping(cls, scores: dict) -> "RubricScore":
        return cls(dimensions=tuple(scores.items()))

    def as_mapping(self) -> dict:
        return dict(self.dimensions)

    def mean(self) -> float:
        vals = [s for _, s in self.dimensions]
        return sum(vals) / len(vals)

    def minimum(self) -> int:
        return min(s for _, s in self.dimensions)

    def to_dict(self) -> dict:
        return {"dimensions": self.as_mapping(), "scale_min": RUBRIC_MIN, "scale_max": RUBRIC_MAX}

    @classmethod
    def from_dict(cls, d: dict) -> "RubricScore":
        return cls.from_mapping({k: int(v) for k, v in d["dimensions"].items()})


@dataclass(frozen=True)
class RuleIssue:
    code: str
    message: str
    location: str = ""

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "location": self.location}

    @classmethod
    def from_dict(cls, d: dict) -> "RuleIssue":
        return cls(code=d["code"], message=d.get("message", ""), location=d.get("location", ""))


@dataclass(frozen=True)
class Review:
    strengths: str
    weaknesses: str
    improvements: str

    def to_dict(self) -> dict:
        return {
            "strengths": self.strengths,
            "weaknesses": self.weaknesses,
            "improvements": self.improvements,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Review":
        return cls(
            strengths=d.get("strengths", ""),
            weaknesses=d.get("weaknesses", ""),
            improvements=d.get("improvements", ""),
        )


@dataclass
class VerifierVerdict:
    """Acceptance-function output gating a stage transition.

    Invariant: an accepting verdict carries no rule issues. Non-blocking
    warnings raised while checks ran are folded into the review text when
    the artifact is accepted anyway.
    """

    stage: str  # plan | package | writing
    rule_issues: list = field(default_factory=list)  # list[RuleIssue]
    rubric: Optional[RubricScore] = None
    decision: str = "reject"  # accept | reject
    review: Optional[Review] = None
    degraded: bool = False  # judge unavailable; rules-only decision

    def __post_init__(self):
        if self.stage not in VERDICT_STAGES:
            raise ValueError(f"unknown verdict stage {self.stage!r}")
        if self.decision == "accept" and self.rule_issues:
            raise ValueError("accepting verdict must carry no rule issues")
        if self.rubric is not None and self.review is None:
            raise ValueError("review required whenever a rubric is present")

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "rule_issues": [i.to_dict() for i in self.rule_issues],
            "rubric": self.rubric.to_dict() if self.rubric else None,
            "decision": self.decision,
            "review": self.review.to_dict() if self.review else None,
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerifierVerdict":
        return cls(
            stage=d["stage"],
            rule_issues=[RuleIssue.from_dict(i) for i in d.get("rule_issues", [])],
            rubric=RubricScore.from_dict(d["rubric"]) if d.get("rubric") else None,
            decision=d.get("decision", "reject"),
            review=Review.from_dict(d["review"]) if d.get("review") else None,
            degraded=d.get("degraded", False),
        )
