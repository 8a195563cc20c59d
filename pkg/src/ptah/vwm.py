"""Visual Working Memory: harvesting, rule filtering, and selector curation.

Candidates move raw -> rule_passed -> selected (or rejected at either
gate). Only selected candidates are visible to the writer. The filter is
a pure function of candidate geometry/format/hash, so re-running it is a
no-op, and its thresholds kill the usual icon/banner noise:
min dimension 200 px, aspect ratio at most 4.0, raster formats only,
exact-hash dedup.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, replace
from typing import Optional

from .errors import JudgeUnavailableError, StructuredOutputError, TransportError
from .gateway import DecodeParams, Message, ModelRequest
from .prompts import load_prompt

MIN_DIMENSION = 200
MAX_ASPECT_RATIO = 4.0
ALLOWED_FORMATS = ("png", "jpeg", "gif", "webp")
SELECTOR_BATCH = 8
CONTEXT_WINDOW = 400  # characters of page markdown either side of the image ref

STATUSES = ("raw", "rule_passed", "selected", "rejected")


@dataclass(frozen=True)
class VisualCandidate:
    asset_id: str
    source_url: str
    page_context: str
    section_id: str
    intended_role: str = ""
    width: int = 0
    height: int = 0
    format: str = "unknown"
    status: str = "raw"
    rejection_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "source_url": self.source_url,
            "page_context": self.page_context,
            "section_id": self.section_id,
            "intended_role": self.intended_role,
            "width": self.width,
            "height": self.height,
            "format": self.format,
            "status": self.status,
            "rejection_reason": self.rejection_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VisualCandidate":
        return cls(
            asset_id=d["asset_id"],
            source_url=d.get("source_url", ""),
            page_context=d.get("page_context", ""),
            section_id=d.get("section_id", ""),
            intended_role=d.get("intended_role", ""),
            width=d.get("width", 0),
            height=d.get("height", 0),
            format=d.get("format", "unknown"),
            status=d.get("status", "raw"),
            rejection_reason=d.get("rejection_reason"),
        )


def decode_dimensions(data: bytes) -> tuple:
    """(width, height, format) from image bytes; zeros when undecodable."""
    from .workspace import sniff_image_format

    fmt = sniff_image_format(data) or "unknown"
    if fmt == "svg":
        return 0, 0, "svg"
    try:
        from PIL import Image

        with Image.open(io.BytesIO(data)) as img:
            return img.width, img.height, fmt
    except Exception:
        return 0, 0, fmt


def harvest_images(runtime, pages, section_id: str) -> list:
    """One raw candidate per downloadable image URL on the given pages.

    Identical bytes found on different pages share one stored asset but
    remain separate candidates. Download failures are logged and skipped.
    """
    candidates = []
    for page in pages:
        markdown = page.markdown
        for url in page.image_urls:
            try:
                data = runtime.adapters.download(url)
            except TransportError as exc:
                runtime.workspace.append_log(
                    "harvest", {"event": "download-failed", "url": url, "error": str(exc)})
                continue
            asset_id = runtime.workspace.assets.store(
                data, meta={"provenance": "harvest", "source_url": url,
                            "page_url": page.url})
            width, height, fmt = decode_dimensions(data)
            idx = markdown.find(url)
            if idx >= 0:
                start = max(0, idx - CONTEXT_WINDOW)
                end = min(len(markdown), idx + len(url) + CONTEXT_WINDOW)
                context = markdown[start:end]
            else:
                context = markdown[: 2 * CONTEXT_WINDOW]
            candidates.append(VisualCandidate(
                asset_id=asset_id, source_url=url, page_context=context,
                section_id=section_id, width=width, height=height,
                format=fmt, status="raw"))
    return candidates


def rule_filter(candidates, min_dimension: int = MIN_DIMENSION,
                max_aspect_ratio: float = MAX_ASPECT_RATIO,
                allowed_formats=ALLOWED_FORMATS) -> list:
    """Deterministic quality gate; statuses and reasons are recomputed fresh.

    Processing order matters only for duplicates: the first occurrence of a
    hash passes, later ones are rejected, which makes the function
    idempotent over its own output.
    """
    out = []
    seen_hashes = set()
    for cand in candidates:
        reason = None
        if cand.format not in allowed_formats:
            reason = "format"
        elif cand.width <= 0 or cand.height <= 0:
            reason = "decode"
        elif min(cand.width, cand.height) < min_dimension:
            reason = "min-dimension"
        elif max(cand.width / cand.height, cand.height / cand.width) > max_aspect_ratio:
            reason = "aspect"
        elif cand.asset_id in seen_hashes:
            reason = "duplicate"
        if reason is None:
            seen_hashes.add(cand.asset_id)
            out.append(replace(cand, status="rule_passed", rejection_reason=None))
        else:
            out.append(replace(cand, status="rejected", rejection_reason=reason))
    return out


_SELECT_SCHEMA = {
    "type": "object",
    "properties": {
        "decisions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "asset_id": {"type": "string", "minLength": 1},
                    "keep": {"type": "boolean"},
                    "role": {"type": "string"},
                },
                "required": ["asset_id", "keep"],
                "additionalProperties": False,
            },
        }
    },
    "required": ["decisions"],
    "additionalProperties": False,
}


def _select_batch(gateway, batch, specs, section_id: str) -> dict:
    """Returns {asset_id: (keep, role)} for one batch of candidates."""
    template = load_prompt("selector")
    spec_text = "\n".join(
        f"- role {s.role!r} ({s.form}): {s.description}" for s in specs) or "- (none specified)"
    cand_text = "\n".join(
        f"- {c.asset_id[:12]} ({c.width}x{c.height} {c.format}) context: "
        f"{c.page_context[:200]}"
        for c in batch)
    prompt = template.format(section_id=section_id, specs=spec_text, candidates=cand_text)
    request = ModelRequest(
        role_hint="selector",
        messages=(Message("user", prompt, images=tuple(c.asset_id for c in batch)),),
        decode=DecodeParams(temperature=0.0))
    expected = {c.asset_id[:12]: c.asset_id for c in batch}

    def post_validate(value):
        got = [d["asset_id"] for d in value["decisions"]]
        missing = [aid for aid in expected if aid not in
                   {g[:12] for g in got} | set(got)]
        if len(got) != len(batch) or missing:
            raise ValueError(
                f"need exactly one decision per candidate; missing {missing}")

    value = gateway.complete_structured(request, _SELECT_SCHEMA, post_validate=post_validate)
    decisions = {}
    for d in value["decisions"]:
        aid = expected.get(d["asset_id"][:12], d["asset_id"])
        decisions[aid] = (bool(d["keep"]), d.get("role", ""))
    return decisions


def vlm_select(gateway, candidates, specs, section_id: str,
               batch_size: int = SELECTOR_BATCH) -> list:
    """Selector pass over rule_passed candidates, batched at most 8 per call.

    A failing batch is retried once; if it fails again its candidates are
    rejected with reason judge-unavailable rather than blocking research.
    """
    passed = [c for c in candidates if c.status == "rule_passed"]
    others = [c for c in candidates if c.status != "rule_passed"]
    if not passed:
        return list(candidates)

    updated = {}
    for i in range(0, len(passed), batch_size):
        batch = passed[i:i + batch_size]
        decisions = None
        for attempt in range(2):
            try:
                decisions = _select_batch(gateway, batch, specs, section_id)
                break
            except (StructuredOutputError, JudgeUnavailableError, TransportError):
                if attempt == 0:
                    continue
        if decisions is None:
            for c in batch:
                updated[id(c)] = replace(c, status="rejected",
                                         rejection_reason="judge-unavailable")
            continue
        spec_roles = [s.role for s in specs]
        for c in batch:
            keep, role = decisions.get(c.asset_id, (False, ""))
            if keep:
                assigned = role or (spec_roles[0] if spec_roles else "")
                updated[id(c)] = replace(c, status="selected", intended_role=assigned)
            else:
                updated[id(c)] = replace(c, status="rejected", rejection_reason="selector")

    out = []
    for c in candidates:
        out.append(updated.get(id(c), c))
    return out


class VisualWorkingMemory:
    """Section-tagged candidate index; writers only ever see selected entries."""

    def __init__(self, candidates: Optional[list] = None):
        self.candidates = list(candidates or [])

    def add(self, candidates) -> None:
        self.candidates.extend(candidates)

    def selected_for(self, section_id: str) -> list:
        return [c for c in self.candidates
                if c.section_id == section_id and c.status == "selected"]

    def counts_by_status(self) -> dict:
        counts: dict = {}
        for c in self.candidates:
            counts[c.status] = counts.get(c.status, 0) + 1
        return counts

    def to_index(self) -> list:
        return [c.to_dict() for c in self.candidates]

    @classmethod
    def from_index(cls, index: list) -> "VisualWorkingMemory":
        return cls([VisualCandidate.from_dict(d) for d in index])

    def write(self, workspace) -> None:
        workspace.write_artifact("vwm/index.json", self.to_index())

    @classmethod
    def load(cls, workspace) -> "VisualWorkingMemory":
        if not workspace.has_artifact("vwm/index.json"):
            return cls()
        return cls.from_index(workspace.read_artifact("vwm/index.json"))
