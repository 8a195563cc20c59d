"""Verifier-guided test-time refinement: six fixed steps ending in a render.

    1. section refine   -> report/tts/01_section_refined.json
    2. image refine     -> report/tts/02_image_refined.json (+ decisions)
    3. overall refine   -> report/refined_report.json
    4. html generate    -> report/report.html (+ report/assets/)
    5. html refine      -> report/report.html (rewritten)
    6. render           -> report/viewport.png

Each step persists before the stage marker advances, so a failed pipeline
resumes from the first incomplete step. Model-quality failures inside
steps 1-3 and 5 degrade to "keep the input" with a logged reason;
infrastructure failures (missing fixture, transport, missing assets,
missing browser) halt the pipeline with the marker at the last completed
step.

Guardrails: no step may introduce a citation URL absent from the raw
report; image refine is the only step allowed to change the visual
multiset; HTML refine must preserve text content (modulo whitespace) and
the image set.
"""

from __future__ import annotations

import json
import re
import shutil
from collections import Counter
from dataclasses import dataclass

from .errors import EditError, PtahError, StageFailure, StructuredOutputError
from .gateway import DecodeParams, Message, ModelRequest
from .htmlgen import HtmlDocument, check_html_document, extract_text, generate_html, image_srcs
from .models import Report, TextBlock, VisualBlock, block_from_dict, validate_report
from .prompts import load_prompt
from .render import render as render_page
from .writer import inline_citation_ids

_URL_RE = re.compile(r"https?://[^\s)\]>\"']+")

IMAGE_ACTIONS = ("Keep", "Delete", "Edit")


@dataclass(frozen=True)
class ImageDecision:
    index: int  # block index addressing a VisualBlock
    action: str
    edit_instruction: str = ""
    rationale: str = ""

    def __post_init__(self):
        if self.action not in IMAGE_ACTIONS:
            raise ValueError(f"unknown image action {self.action!r}")
        if (self.action == "Edit") != bool(self.edit_instruction):
            raise ValueError("edit_instruction present iff action is Edit")

    def to_dict(self) -> dict:
        return {"index": self.index, "action": self.action,
                "edit_instruction": self.edit_instruction, "rationale": self.rationale}


def _urls_in(text: str) -> set:
    return set(_URL_RE.findall(text))


def _section_order(report: Report) -> list:
    order = []
    for block in report.blocks:
        if block.section_id not in order:
            order.append(block.section_id)
    return order


# ---------------------------------------------------------------------------
# Step 1: section refine
# ---------------------------------------------------------------------------


def refine_sections(gateway, report: Report, query_text: str = "", log=None) -> Report:
    """Revise each section's prose; visuals and citation sets are inviolate."""
    template = load_prompt("refine_section")
    new_blocks = list(report.blocks)
    reference_urls = {c.url for c in report.references}

    for section_id in _section_order(report):
        positions = [i for i, b in enumerate(report.blocks)
                     if isinstance(b, TextBlock) and b.section_id == section_id]
        if not positions:
            continue
        texts = [report.blocks[i].markdown for i in positions]
        original_cites = set()
        original_urls = set()
        for t in texts:
            original_cites.update(inline_citation_ids(t))
            original_urls.update(_urls_in(t))
        allowed_urls = original_urls | reference_urls

        def post_validate(value, _n=len(positions), _cites=original_cites,
                          _urls=allowed_urls):
            revised = value["texts"]
            if len(revised) != _n:
                raise ValueError(f"need exactly {_n} passages, got {len(revised)}")
            for t in revised:
                new_ids = set(inline_citation_ids(t)) - _cites
                if new_ids:
                    raise ValueError(f"new citation ids introduced: {sorted(new_ids)}")
                new_urls = _urls_in(t) - _urls
                if new_urls:
                    raise ValueError(f"new URLs introduced: {sorted(new_urls)}")

        prompt = template.format(section_id=section_id, query=query_text,
                                 texts=json.dumps(texts, ensure_ascii=False, indent=2))
        request = ModelRequest(role_hint="writer", messages=(Message("user", prompt),),
                               decode=DecodeParams(temperature=0.3))
        schema = {"type": "object",
                  "properties": {"texts": {"type": "array",
                                           "items": {"type": "string", "minLength": 1}}},
                  "required": ["texts"], "additionalProperties": False}
        try:
            value = gateway.complete_structured(request, schema, post_validate=post_validate)
        except StructuredOutputError as exc:
            if log is not None:
                log({"event": "section-refine-degraded", "section": section_id,
                     "error": str(exc)})
            continue
        for pos, text in zip(positions, value["texts"]):
            new_blocks[pos] = TextBlock(markdown=text, section_id=section_id)

    refined = Report(title=report.title, blocks=new_blocks, references=report.references)
    if validate_report(refined):
        if log is not None:
            log({"event": "section-refine-degraded", "error": "revalidation failed"})
        return report
    return refined


# ---------------------------------------------------------------------------
# Step 2: image refine
# ---------------------------------------------------------------------------

_DECISION_SCHEMA = {
    "type": "object",
    "properties": {
        "decisions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "action": {"enum": list(IMAGE_ACTIONS)},
                    "edit_instruction": {"type": "string"},
                    "rationale": {"type": "string"},
                },
                "required": ["index", "action"],
                "additionalProperties": False,
            },
        }
    },
    "required": ["decisions"],
    "additionalProperties": False,
}


def _decide_images(gateway, report: Report) -> list:
    """One judge call covering every visual; returns ImageDecisions."""
    visuals = report.visual_blocks()
    template = load_prompt("refine_image")
    lines = []
    for idx, block in visuals:
        before = after = ""
        if idx > 0 and isinstance(report.blocks[idx - 1], TextBlock):
            before = report.blocks[idx - 1].markdown[-200:]
        if idx + 1 < len(report.blocks) and isinstance(report.blocks[idx + 1], TextBlock):
            after = report.blocks[idx + 1].markdown[:200]
        lines.append(f"- index {idx}: role={block.role!r} caption={block.caption!r}\n"
                     f"  before: {before}\n  after: {after}")
    prompt = template.format(visuals="\n".join(lines))
    expected = {idx for idx, _ in visuals}

    def post_validate(value):
        got = [d["index"] for d in value["decisions"]]
        if sorted(got) != sorted(expected):
            raise ValueError(f"need exactly one decision per visual index {sorted(expected)}")
        for d in value["decisions"]:
            if (d["action"] == "Edit") != bool(d.get("edit_instruction", "")):
                raise ValueError("edit_instruction must be present exactly when action is Edit")

    request = ModelRequest(
        role_hint="judge",
        messages=(Message("user", prompt, images=tuple(b.asset_id for _, b in visuals)),),
        decode=DecodeParams(temperature=0.0))
    value = gateway.complete_structured(request, _DECISION_SCHEMA, post_validate=post_validate)
    return [ImageDecision(index=d["index"], action=d["action"],
                          edit_instruction=d.get("edit_instruction", ""),
                          rationale=d.get("rationale", ""))
            for d in value["decisions"]]


def refine_images(gateway, runtime, report: Report, log=None) -> tuple:
    """Apply Keep/Delete/Edit decisions. Returns (report, decisions, failures)."""
    visuals = report.visual_blocks()
    if not visuals:
        return report, [], []
    try:
        decisions = _decide_images(gateway, report)
    except StructuredOutputError as exc:
        if log is not None:
            log({"event": "image-refine-degraded", "error": str(exc)})
        decisions = [ImageDecision(index=idx, action="Keep") for idx, _ in visuals]

    by_index = {d.index: d for d in decisions}
    failures = []
    new_blocks = []
    for idx, block in enumerate(report.blocks):
        decision = by_index.get(idx)
        if decision is None or not isinstance(block, VisualBlock):
            new_blocks.append(block)
            continue
        if decision.action == "Keep":
            new_blocks.append(block)
        elif decision.action == "Delete":
            continue
        else:  # Edit
            try:
                new_asset = runtime.image_edit(block.asset_id, decision.edit_instruction)
                new_blocks.append(VisualBlock(asset_id=new_asset, caption=block.caption,
                                              role=block.role, section_id=block.section_id,
                                              origin=block.origin))
            except (EditError, PtahError, ValueError) as exc:  # fall back to Keep
                failures.append({"index": idx, "asset_id": block.asset_id,
                                 "error": str(exc)})
                new_blocks.append(block)
    refined = Report(title=report.title, blocks=new_blocks, references=report.references)
    return refined, decisions, failures


# ---------------------------------------------------------------------------
# Step 3: overall refine
# ---------------------------------------------------------------------------


def refine_overall(gateway, report: Report, log=None) -> Report:
    """Global reorganization; the visual multiset and references are fixed."""
    template = load_prompt("refine_overall")
    blocks_json = json.dumps([b.to_dict() for b in report.blocks],
                             ensure_ascii=False, indent=2)
    prompt = template.format(blocks=blocks_json)
    original_visuals = Counter(b.asset_id for _, b in report.visual_blocks())
    original_cites = set()
    original_urls = set()
    for _, b in report.text_blocks():
        original_cites.update(inline_citation_ids(b.markdown))
        original_urls.update(_urls_in(b.markdown))
    original_urls |= {c.url for c in report.references}

    def post_validate(value):
        try:
            candidate = [block_from_dict(d) for d in value["blocks"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"blocks do not parse: {exc}")
        visuals = Counter(b.asset_id for b in candidate if isinstance(b, VisualBlock))
        if visuals != original_visuals:
            raise ValueError("the multiset of visual asset ids must be preserved")
        for b in candidate:
            if isinstance(b, TextBlock):
                if set(inline_citation_ids(b.markdown)) - original_cites:
                    raise ValueError("new citation ids introduced")
                if _urls_in(b.markdown) - original_urls:
                    raise ValueError("new URLs introduced")
        trial = Report(title=report.title, blocks=candidate, references=report.references)
        issues = validate_report(trial)
        if issues:
            raise ValueError("revalidation failed: "
                             + "; ".join(i.code for i in issues))

    schema = {"type": "object",
              "properties": {"blocks": {"type": "array", "items": {"type": "object"}}},
              "required": ["blocks"], "additionalProperties": False}
    request = ModelRequest(role_hint="writer", messages=(Message("user", prompt),),
                           decode=DecodeParams(temperature=0.3))
    try:
        value = gateway.complete_structured(request, schema, post_validate=post_validate)
    except StructuredOutputError as exc:
        if log is not None:
            log({"event": "overall-refine-degraded", "error": str(exc)})
        return report
    blocks = [block_from_dict(d) for d in value["blocks"]]
    return Report(title=report.title, blocks=blocks, references=report.references)


# ---------------------------------------------------------------------------
# Step 5: html refine
# ---------------------------------------------------------------------------


def refine_html(gateway, doc: HtmlDocument, log=None) -> HtmlDocument:
    """Style/structure polish; text content and the image set are invariant."""
    template = load_prompt("refine_html")
    prompt = template.format(html=doc.html)
    request = ModelRequest(role_hint="writer", messages=(Message("user", prompt),),
                           decode=DecodeParams(temperature=0.3))
    try:
        response = gateway.complete(request)
    except StructuredOutputError as exc:
        if log is not None:
            log({"event": "html-refine-degraded", "error": str(exc)})
        return doc
    revised_html = response.text
    fence = re.search(r"```(?:html)?\s*(.*?)```", revised_html, re.S)
    if fence:
        revised_html = fence.group(1)
    revised = HtmlDocument(html=revised_html, asset_manifest=list(doc.asset_manifest),
                           style_id=doc.style_id)
    problems = check_html_document(revised)
    if extract_text(revised.html) != extract_text(doc.html):
        problems.append("text content changed")
    if sorted(image_srcs(revised.html)) != sorted(image_srcs(doc.html)):
        problems.append("image set changed")
    if problems:
        if log is not None:
            log({"event": "html-refine-degraded", "problems": problems})
        return doc
    return revised


# ---------------------------------------------------------------------------
# Pipeline driver
# ---------------------------------------------------------------------------

TTS_STEPS = (
    ("section_refine", "section_refined"),
    ("image_refine", "image_refined"),
    ("overall_refine", "overall_refined"),
    ("html_generate", "html_generated"),
    ("html_refine", "html_refined"),
    ("render", "refined"),
)


def run_tts(gateway, runtime, workspace, screenshot: bool = True,
            browser_cmd: str = "", viewport: tuple = (1000, 2000)) -> dict:
    """Execute the six refinement steps in order, resumably.

    Steps already reflected by the workspace stage marker are skipped; a
    failing step halts the pipeline with the marker still at the last
    completed step.
    """
    from .workspace import STAGES

    if not workspace.has_artifact("report/raw_report.json"):
        raise StageFailure("tts", "no raw report to refine")
    query_text = workspace.query().text

    def log(record):
        workspace.append_log("tts", record)

    def done(marker: str) -> bool:
        return workspace.stage_index() >= STAGES.index(marker)

    def step_guard(name, fn):
        try:
            return fn()
        except StageFailure:
            raise
        except Exception as exc:
            raise StageFailure("tts", f"step {name} failed: {exc}") from exc

    # Step 1: section refine
    if not done("section_refined"):
        def _s1():
            raw = Report.from_dict(workspace.read_artifact("report/raw_report.json"))
            refined = refine_sections(gateway, raw, query_text=query_text, log=log)
            workspace.write_artifact("report/tts/01_section_refined.json", refined.to_dict())
            workspace.advance_stage("section_refined")
        step_guard("section_refine", _s1)

    # Step 2: image refine
    if not done("image_refined"):
        def _s2():
            current = Report.from_dict(workspace.read_artifact("report/tts/01_section_refined.json"))
            refined, decisions, failures = refine_images(gateway, runtime, current, log=log)
            workspace.write_artifact("report/tts/02_image_refined.json", refined.to_dict())
            workspace.write_artifact("report/tts/image_decisions.json",
                                     {"decisions": [d.to_dict() for d in decisions],
                                      "failures": failures})
            workspace.advance_stage("image_refined")
        step_guard("image_refine", _s2)

    # Step 3: overall refine
    if not done("overall_refined"):
        def _s3():
            current = Report.from_dict(workspace.read_artifact("report/tts/02_image_refined.json"))
            refined = refine_overall(gateway, current, log=log)
            workspace.write_artifact("report/refined_report.json", refined.to_dict())
            workspace.advance_stage("overall_refined")
        step_guard("overall_refine", _s3)

    # Step 4: html generate
    if not done("html_generated"):
        def _s4():
            refined = Report.from_dict(workspace.read_artifact("report/refined_report.json"))
            doc = generate_html(refined, workspace.assets)
            assets_dir = workspace.root / "report" / "assets"
            assets_dir.mkdir(parents=True, exist_ok=True)
            for rel in doc.asset_manifest:
                name = rel.split("/", 1)[1]
                shutil.copyfile(workspace.root / "vwm" / "images" / name, assets_dir / name)
            (workspace.root / "report" / "report.html").write_text(doc.html, encoding="utf-8")
            workspace.write_artifact("report/tts/04_document.json", doc.to_dict())
            workspace.advance_stage("html_generated")
        step_guard("html_generate", _s4)

    # Step 5: html refine
    if not done("html_refined"):
        def _s5():
            doc = HtmlDocument.from_dict(workspace.read_artifact("report/tts/04_document.json"))
            revised = refine_html(gateway, doc, log=log)
            (workspace.root / "report" / "report.html").write_text(revised.html, encoding="utf-8")
            workspace.write_artifact("report/tts/05_document.json", revised.to_dict())
            workspace.advance_stage("html_refined")
        step_guard("html_refine", _s5)

    # Step 6: render
    if not done("refined"):
        def _s6():
            result = render_page(workspace.root / "report" / "report.html",
                                 workspace.root / "report",
                                 browser_cmd=browser_cmd,
                                 width=viewport[0], height=viewport[1],
                                 screenshot=screenshot)
            log({"event": "rendered", **{k: v for k, v in result.items()}})
            workspace.advance_stage("refined")
        step_guard("render", _s6)

    return {
        "refined_report": str(workspace.root / "report" / "refined_report.json"),
        "html": str(workspace.root / "report" / "report.html"),
        "viewport": str(workspace.root / "report" / "viewport.png")
        if (workspace.root / "report" / "viewport.png").exists() else None,
    }
