"""Declarative composition: sections with inline image directives.

The writer emits Markdown carrying image directive tags; a separate
arbitration step resolves each tag to a concrete image operation:

    <img-op type="reference" role="trend-chart">GDP growth chart</img-op>
    <img-op type="search"    role="photo">solar farm aerial view</img-op>
    <img-op type="generate"  role="diagram">pipeline stages diagram</img-op>
    <img-op type="chart"     role="bar-chart">{"script": "...", "data": {...}}</img-op>

Grammar rules: exactly that attribute order, double quotes, no nesting.
Text containing ``<img-op`` or ``</img-op>`` outside a well-formed tag is
malformed. Reference directives resolve to the best keyword-matching
Visual Working Memory candidate and degrade to a web image search when
nothing matches.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    AssemblyError,
    ConfigError,
    DirectiveParseError,
    IntegrityError,
    ToolError,
)
from .gateway import DecodeParams, Message, ModelRequest
from .models import Citation, TextBlock, VisualBlock, canonical_json, validate_report, Report
from .prompts import load_prompt
from .urls import canonical_url

DIRECTIVE_OPS = ("reference", "search", "generate", "chart")

_OPEN_RE = re.compile(r'<img-op type="([a-z]+)" role="([^"]*)">')
_CLOSE = "</img-op>"
_CITE_RE = re.compile(r"\[cite:([^\]\s]+)\]")
_URL_RE = re.compile(r"https?://[^\s)\]>\"']+")


@dataclass(frozen=True)
class ImageDirective:
    op: str
    section_id: str
    role: str
    payload: dict
    position: int  # character offset into the directive-stripped text
    body: str  # verbatim tag body, kept for exact round-trips

    def __post_init__(self):
        if self.op not in DIRECTIVE_OPS:
            raise ValueError(f"unknown directive op {self.op!r}")
        if self.position < 0:
            raise ValueError("directive position out of bounds")

    def to_dict(self) -> dict:
        return {"op": self.op, "section_id": self.section_id, "role": self.role,
                "payload": self.payload, "position": self.position, "body": self.body}

    @classmethod
    def from_dict(cls, d: dict) -> "ImageDirective":
        return cls(op=d["op"], section_id=d.get("section_id", ""), role=d.get("role", ""),
                   payload=d.get("payload", {}), position=d["position"], body=d.get("body", ""))


def _line_col(text: str, offset: int) -> tuple:
    line = text.count("\n", 0, offset) + 1
    last_nl = text.rfind("\n", 0, offset)
    column = offset - last_nl
    return line, column


def _err(code: str, message: str, text: str, offset: int):
    line, column = _line_col(text, offset)
    raise DirectiveParseError(code, message, offset, line, column)


def _payload_for(op: str, role: str, body: str, text: str, offset: int) -> dict:
    if op == "reference":
        return {"query_terms": body.strip()}
    if op == "search":
        return {"query": body.strip()}
    if op == "generate":
        return {"prompt": body.strip()}
    # chart: body must be a JSON object with script + data
    try:
        value = json.loads(body)
    except json.JSONDecodeError as exc:
        _err("chart-payload", f"chart body is not valid JSON: {exc}", text, offset)
    if not isinstance(value, dict) or "script" not in value or "data" not in value:
        _err("chart-payload", "chart body needs 'script' and 'data' fields", text, offset)
    return {"script": value["script"], "data": value["data"]}


def parse_directives(text: str, section_id: str = "") -> tuple:
    """Split writer Markdown into (clean_text, directives).

    Raises DirectiveParseError (with offset/line/column) for unclosed tags,
    unknown ops, malformed attributes, nested tags, stray closers, and
    undecodable chart payloads.
    """
    clean_parts: list = []
    directives: list = []
    pos = 0
    clean_len = 0
    while True:
        i = text.find("<img-op", pos)
        j = text.find(_CLOSE, pos)
        if j != -1 and (i == -1 or j < i):
            _err("stray-close", "closing tag without a matching opener", text, j)
        if i == -1:
            clean_parts.append(text[pos:])
            break
        chunk = text[pos:i]
        clean_parts.append(chunk)
        clean_len += len(chunk)
        m = _OPEN_RE.match(text, i)
        if not m:
            _err("malformed-tag",
                 'opener must be <img-op type="..." role="..."> in that order',
                 text, i)
        op = m.group(1)
        role = m.group(2)
        if op not in DIRECTIVE_OPS:
            _err("unknown-op", f"unknown directive type {op!r}", text, i)
        body_start = m.end()
        k = text.find(_CLOSE, body_start)
        if k == -1:
            _err("unclosed-tag", "directive tag never closed", text, i)
        body = text[body_start:k]
        nested = body.find("<img-op")
        if nested != -1:
            _err("nested-tag", "directives cannot nest", text, body_start + nested)
        payload = _payload_for(op, role, body, text, i)
        directives.append(ImageDirective(op=op, section_id=section_id, role=role,
                                         payload=payload, position=clean_len, body=body))
        pos = k + len(_CLOSE)
    return "".join(clean_parts), directives


def serialize_directives(clean_text: str, directives: list) -> str:
    """Inverse of parse_directives: re-insert tags at their positions."""
    out: list = []
    prev = 0
    for d in directives:
        out.append(clean_text[prev:d.position])
        out.append(f'<img-op type="{d.op}" role="{d.role}">{d.body}</img-op>')
        prev = d.position
    out.append(clean_text[prev:])
    return "".join(out)


# ---------------------------------------------------------------------------
# Section drafts
# ---------------------------------------------------------------------------


@dataclass
class SectionDraft:
    section_id: str
    markdown_with_tags: str
    directives: list = field(default_factory=list)
    citations_used: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "section_id": self.section_id,
            "markdown_with_tags": self.markdown_with_tags,
            "directives": [d.to_dict() for d in self.directives],
            "citations_used": list(self.citations_used),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SectionDraft":
        return cls(
            section_id=d["section_id"],
            markdown_with_tags=d["markdown_with_tags"],
            directives=[ImageDirective.from_dict(x) for x in d.get("directives", [])],
            citations_used=list(d.get("citations_used", [])),
        )


_DRAFT_SCHEMA = {
    "type": "object",
    "properties": {
        "markdown": {"type": "string", "minLength": 1},
        "citations_used": {"type": "array", "items": {"type": "string"}},
    },
    "required": ["markdown", "citations_used"],
    "additionalProperties": False,
}


def inline_citation_ids(markdown: str) -> list:
    return _CITE_RE.findall(markdown)


def compose_section(gateway, package, vwm_slice, section, query) -> SectionDraft:
    """Draft one section jointly with its image directives.

    Directive grammar errors and unknown citation ids are fed back through
    the structured-output repair loop rather than surfacing as crashes.
    """
    template = load_prompt("writer")
    known_ids = {c.id for c in package.references}
    candidates_text = "\n".join(
        f"- asset {c.asset_id[:12]} role={c.intended_role!r} "
        f"({c.width}x{c.height}) context: {c.page_context[:160]}"
        for c in vwm_slice) or "- (none available)"
    specs_text = "\n".join(
        f"- {s.role} ({s.form}, {s.placement_hint}): {s.description}"
        for s in section.visual_specs) or "- (none specified)"
    prompt = template.format(
        query=query.text, section_id=section.id, title=section.title,
        writing_instructions=section.writing_instructions or package.writing_instructions,
        package=canonical_json(package.to_dict()),
        visual_specs=specs_text, candidates=candidates_text, feedback="")

    def post_validate(value):
        problems = []
        try:
            parse_directives(value["markdown"], section_id=section.id)
        except DirectiveParseError as exc:
            problems.append(str(exc))
        for cid in value["citations_used"]:
            if cid not in known_ids:
                problems.append(f"citations_used contains unknown id {cid!r}")
        for cid in inline_citation_ids(value["markdown"]):
            if cid not in known_ids:
                problems.append(f"inline citation [cite:{cid}] does not resolve")
        if problems:
            raise ValueError("; ".join(problems))

    request = ModelRequest(role_hint="writer", messages=(Message("user", prompt),),
                           decode=DecodeParams(temperature=0.7))
    value = gateway.complete_structured(request, _DRAFT_SCHEMA, post_validate=post_validate)
    _, directives = parse_directives(value["markdown"], section_id=section.id)
    return SectionDraft(section_id=section.id, markdown_with_tags=value["markdown"],
                        directives=directives, citations_used=list(value["citations_used"]))


def compose_conclusion(gateway, plan, packages, query) -> SectionDraft:
    template = load_prompt("conclusion")
    known_ids = {c.id for pkg in packages.values() for c in pkg.references}
    summaries = "\n".join(
        f"- {sid}: " + "; ".join(pkg.key_findings[:3])
        for sid, pkg in packages.items())
    prompt = template.format(query=query.text, overview=plan.overview,
                             summaries=summaries, feedback="")

    def post_validate(value):
        problems = []
        try:
            _, dirs = parse_directives(value["markdown"], section_id="conclusion")
            if dirs:
                problems.append("the conclusion must not contain image directives")
        except DirectiveParseError as exc:
            problems.append(str(exc))
        for cid in list(value["citations_used"]) + inline_citation_ids(value["markdown"]):
            if cid not in known_ids:
                problems.append(f"unknown citation id {cid!r}")
        if problems:
            raise ValueError("; ".join(problems))

    request = ModelRequest(role_hint="writer", messages=(Message("user", prompt),),
                           decode=DecodeParams(temperature=0.7))
    value = gateway.complete_structured(request, _DRAFT_SCHEMA, post_validate=post_validate)
    return SectionDraft(section_id="conclusion", markdown_with_tags=value["markdown"],
                        directives=[], citations_used=list(value["citations_used"]))


# ---------------------------------------------------------------------------
# Arbitration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UseCandidate:
    asset_id: str


@dataclass(frozen=True)
class DoSearch:
    query: str


@dataclass(frozen=True)
class DoGenerate:
    prompt: str


@dataclass(frozen=True)
class DoChart:
    script: str
    data: object


_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def _tokens(text: str) -> set:
    return set(_TOKEN_RE.findall(text.casefold()))


def arbitrate(directive: ImageDirective, vwm_slice: list):
    """Resolve a directive to a concrete image operation.

    Reference directives pick the highest-scoring candidate by case-folded
    token overlap (directive role+body vs candidate role+context); ties go
    to the larger image, then the lexicographically smaller asset hash.
    With no match at all, reference degrades to a web image search.
    """
    if directive.op == "search":
        return DoSearch(query=directive.payload["query"])
    if directive.op == "generate":
        return DoGenerate(prompt=directive.payload["prompt"])
    if directive.op == "chart":
        return DoChart(script=directive.payload["script"], data=directive.payload["data"])

    want = _tokens(directive.role + " " + directive.body)
    best = None
    best_key = None
    for cand in vwm_slice:
        have = _tokens(cand.intended_role + " " + cand.page_context)
        score = len(want & have)
        if score < 1:
            continue
        key = (-score, -(cand.width * cand.height), cand.asset_id)
        if best_key is None or key < best_key:
            best_key = key
            best = cand
    if best is not None:
        return UseCandidate(asset_id=best.asset_id)
    return DoSearch(query=directive.payload["query_terms"] or directive.role)


# ---------------------------------------------------------------------------
# Resolution and assembly
# ---------------------------------------------------------------------------


def resolve_images(draft: SectionDraft, vwm_slice: list, runtime) -> tuple:
    """Turn a draft into content blocks. Returns (blocks, failures).

    Text is split around directive positions; every character of the
    directive-stripped draft lands in exactly one text block. A directive
    whose tool errs is dropped with a recorded failure instead of aborting
    the section.
    """
    clean_text, directives = parse_directives(draft.markdown_with_tags,
                                              section_id=draft.section_id)
    blocks: list = []
    failures: list = []
    prev = 0
    for directive in directives:
        segment = clean_text[prev:directive.position]
        if segment:
            blocks.append(TextBlock(markdown=segment, section_id=draft.section_id))
        prev = directive.position
        resolved = arbitrate(directive, vwm_slice)
        caption = directive.role if directive.op == "chart" else directive.body.strip()
        try:
            if isinstance(resolved, UseCandidate):
                asset_id, origin = resolved.asset_id, "reference"
            elif isinstance(resolved, DoSearch):
                hits, _ = runtime.image_search(resolved.query, k=1)
                if not hits:
                    raise ToolError(f"image search found nothing for {resolved.query!r}")
                asset_id, origin = hits[0]["asset_id"], "search"
            elif isinstance(resolved, DoGenerate):
                asset_id, origin = runtime.image_generate(resolved.prompt), "generated"
            else:
                asset_id, origin = runtime.chart_exec(resolved.script, resolved.data), "generated"
        except (ToolError, ConfigError, IntegrityError, ValueError) as exc:
            failures.append({"section_id": draft.section_id, "op": directive.op,
                             "role": directive.role, "error": str(exc)})
            continue
        blocks.append(VisualBlock(asset_id=asset_id, caption=caption,
                                  role=directive.role, section_id=draft.section_id,
                                  origin=origin))
    tail = clean_text[prev:]
    if tail:
        blocks.append(TextBlock(markdown=tail, section_id=draft.section_id))
    return blocks, failures


@dataclass
class ComposedSection:
    section_id: str
    draft: SectionDraft
    blocks: list

    def citations_used_order(self) -> list:
        """Citation ids in first-use order: inline mentions first, then the
        draft's declared list for anything never cited inline."""
        seen = []
        for cid in inline_citation_ids(self.draft.markdown_with_tags):
            if cid not in seen:
                seen.append(cid)
        for cid in self.draft.citations_used:
            if cid not in seen:
                seen.append(cid)
        return seen


def assemble_report(plan, composed: list, conclusion: Optional[ComposedSection],
                    packages: dict, title: str, asset_store=None) -> Report:
    """Stitch resolved sections (in plan order) into the raw report.

    References are the union of citations actually used, deduplicated by
    canonical URL and ordered by first use.
    """
    by_id = {c.section_id: c for c in composed}
    missing = [s.id for s in plan.sections if s.id not in by_id]
    if missing:
        raise AssemblyError(f"section drafts missing for: {', '.join(missing)}")

    blocks: list = []
    references: list = []
    seen_canon: set = set()

    def add_citation(cit: Citation) -> None:
        try:
            canon = canonical_url(cit.url)
        except ValueError:
            canon = cit.url
        if canon not in seen_canon:
            seen_canon.add(canon)
            references.append(cit)

    all_citations: dict = {}
    for pkg in packages.values():
        for cit in pkg.references:
            all_citations.setdefault(cit.id, cit)

    ordered = [by_id[s.id] for s in plan.sections]
    if conclusion is not None:
        ordered.append(conclusion)
    for section in ordered:
        blocks.extend(section.blocks)
        for cid in section.citations_used_order():
            cit = all_citations.get(cid)
            if cit is not None:
                add_citation(cit)

    report = Report(title=title, blocks=blocks, references=references)
    issues = validate_report(report, asset_store=asset_store)
    if issues:
        detail = "; ".join(f"{i.code}@{i.block_index}" for i in issues)
        raise AssemblyError(f"assembled report failed validation: {detail}")
    return report
