"""Report evaluation: per-image scores, viewport presentation scores, and
citation (FACT) metrics, all judge-backed through the gateway so the whole
module runs against mocks.

Conventions baked in:
* a report with no visual blocks gets a not-applicable ICQ marker, never
  zero scores;
* a report with no citations gets accuracy 0.0 with an ``empty_report``
  flag;
* every persisted average equals the arithmetic mean of its inputs rounded
  to two decimals.
"""

from __future__ import annotations

import json
from typing import Optional

from .errors import EvalError, StructuredOutputError
from .gateway import DecodeParams, Message, ModelRequest
from .models import Report, TextBlock
from .prompts import load_prompt, prompt_hash
from .urls import canonical_url
from .writer import inline_citation_ids

ICQ_DIMS = ("vc", "cma", "ic", "es")
MPQ_DIMS = ("dlb", "is", "ved", "ve")
EXPECTED_VIEWPORT = (1000, 2000)


def _mean2(values) -> float:
    vals = list(values)
    return round(sum(vals) / len(vals), 2)


def _judge_schema(dims) -> dict:
    props = {d: {"type": "integer", "minimum": 1, "maximum": 5} for d in dims}
    props["rationale"] = {
        "type": "object",
        "properties": {d: {"type": "string"} for d in dims},
        "additionalProperties": False,
    }
    return {"type": "object", "properties": props,
            "required": list(dims), "additionalProperties": False}


# ---------------------------------------------------------------------------
# ICQ
# ---------------------------------------------------------------------------


def score_icq(gateway, report: Report, workspace) -> dict:
    """Per-image judging with the adjacent text blocks as context.

    A judge-format failure on one image excludes that image from the means
    with a warning; it never zeroes the scores.
    """
    visuals = report.visual_blocks()
    if not visuals:
        result = {"applicable": False, "reason": "no-visual-blocks"}
        workspace.write_artifact("eval/icq.json", result)
        return result

    template = load_prompt("icq")
    schema = _judge_schema(ICQ_DIMS)
    per_image = []
    warnings = []
    for idx, block in visuals:
        before = after = ""
        if idx > 0 and isinstance(report.blocks[idx - 1], TextBlock):
            before = report.blocks[idx - 1].markdown
        if idx + 1 < len(report.blocks) and isinstance(report.blocks[idx + 1], TextBlock):
            after = report.blocks[idx + 1].markdown
        prompt = template.format(before=before[-1200:], after=after[:1200],
                                 caption=block.caption, role=block.role)
        request = ModelRequest(
            role_hint="judge",
            messages=(Message("user", prompt, images=(block.asset_id,)),),
            decode=DecodeParams(temperature=0.0))
        try:
            value = gateway.complete_structured(request, schema)
        except StructuredOutputError as exc:
            warnings.append({"block_index": idx, "asset_id": block.asset_id,
                             "error": str(exc)})
            continue
        record = {"block_index": idx, "asset_id": block.asset_id}
        for d in ICQ_DIMS:
            record[d] = value[d]
        record["rationale"] = value.get("rationale", {})
        per_image.append(record)

    if per_image:
        averages = {d: _mean2(r[d] for r in per_image) for d in ICQ_DIMS}
        averages["overall"] = _mean2(r[d] for r in per_image for d in ICQ_DIMS)
    else:
        averages = None
    result = {
        "applicable": True,
        "per_image": per_image,
        "averages": averages,
        "warnings": warnings,
        "prompt_sha": prompt_hash("icq"),
    }
    workspace.write_artifact("eval/icq.json", result)
    return result


# ---------------------------------------------------------------------------
# MPQ
# ---------------------------------------------------------------------------


def score_mpq(gateway, viewport_png, workspace,
              expected=EXPECTED_VIEWPORT) -> dict:
    """Single judge call over the rendered viewport capture."""
    from pathlib import Path

    png_path = Path(viewport_png)
    if not png_path.exists():
        raise EvalError(f"viewport capture missing: {png_path}")
    warnings = []
    try:
        from PIL import Image

        with Image.open(png_path) as img:
            if img.size != tuple(expected):
                warnings.append(
                    f"viewport is {img.width}x{img.height}, expected "
                    f"{expected[0]}x{expected[1]}")
    except Exception as exc:
        raise EvalError(f"viewport capture unreadable: {exc}") from exc

    template = load_prompt("mpq")
    request = ModelRequest(
        role_hint="judge",
        messages=(Message("user", template, images=(str(png_path),)),),
        decode=DecodeParams(temperature=0.0))
    try:
        value = gateway.complete_structured(request, _judge_schema(MPQ_DIMS))
    except StructuredOutputError as exc:
        raise EvalError(f"presentation judge failed: {exc}") from exc
    scores = {d: value[d] for d in MPQ_DIMS}
    result = {
        "scores": scores,
        "mean": _mean2(scores.values()),
        "rationale": value.get("rationale", {}),
        "warnings": warnings,
        "prompt_sha": prompt_hash("mpq"),
    }
    workspace.write_artifact("eval/mpq.json", result)
    return result


# ---------------------------------------------------------------------------
# FACT
# ---------------------------------------------------------------------------


def _check_reachable(url: str):
    import requests

    try:
        resp = requests.head(url, timeout=10, allow_redirects=True)
        if resp.status_code >= 400:
            resp = requests.get(url, timeout=10, stream=True)
        return resp.status_code < 400
    except requests.RequestException:
        return False


def _find_page_text(workspace, url: str) -> str:
    try:
        canon = canonical_url(url)
    except ValueError:
        return ""
    scopes = ["plan"]
    research = workspace.root / "research"
    if research.exists():
        scopes.extend(sorted(p.name for p in research.iterdir() if p.is_dir()))
    for scope in scopes:
        for page in workspace.pages(scope).all_pages():
            try:
                if canonical_url(page["url"]) == canon:
                    return page.get("markdown", "")
            except ValueError:
                continue
    return ""


def _citing_passages(report: Report, citation_id: str) -> list:
    passages = []
    for _, block in report.text_blocks():
        if citation_id in inline_citation_ids(block.markdown):
            passages.append(block.markdown)
    return passages


def count_search_calls(workspace) -> int:
    """Text-search tool calls across the plan and all section trajectories."""
    count = 0
    paths = []
    plan_traj = workspace.root / "plan" / "trajectory.json"
    if plan_traj.exists():
        paths.append(plan_traj)
    research = workspace.root / "research"
    if research.exists():
        for sub in sorted(research.iterdir()):
            traj = sub / "trajectory.json"
            if traj.exists():
                paths.append(traj)
    for path in paths:
        steps = json.loads(path.read_text(encoding="utf-8"))
        for step in steps:
            action = step.get("action")
            if action and action.get("tool") == "text_search":
                count += 1
    return count


def fact_metrics(report: Report, workspace, gateway=None,
                 offline: bool = True) -> dict:
    """Citation accuracy, effective citations, and search-call count.

    The rule layer checks ledger membership and (online only) URL
    reachability; the optional judge layer marks whether each source
    supports the passages citing it. A citation is effective when no layer
    voted it down.
    """
    ledger = workspace.union_ledger_urls()
    records = []
    effective = 0
    for cit in report.references:
        try:
            in_ledger = canonical_url(cit.url) in ledger
        except ValueError:
            in_ledger = False
        reachable = "unknown" if offline else _check_reachable(cit.url)
        supported: Optional[bool] = None
        if gateway is not None:
            passages = _citing_passages(report, cit.id)
            page_text = _find_page_text(workspace, cit.url)
            template = load_prompt("fact_support")
            prompt = template.format(url=cit.url, title=cit.title,
                                     passages="\n---\n".join(passages) or "(none)",
                                     page_text=page_text[:4000] or "(unavailable)")
            schema = {"type": "object",
                      "properties": {"supported": {"type": "boolean"},
                                     "reason": {"type": "string"}},
                      "required": ["supported"], "additionalProperties": False}
            request = ModelRequest(role_hint="judge",
                                   messages=(Message("user", prompt),),
                                   decode=DecodeParams(temperature=0.0))
            try:
                supported = bool(gateway.complete_structured(request, schema)["supported"])
            except StructuredOutputError:
                supported = None
        is_effective = in_ledger and reachable is not False and supported is not False
        if is_effective:
            effective += 1
        records.append({"url": cit.url, "citation_id": cit.id,
                        "in_ledger": in_ledger, "reachable": reachable,
                        "supported": supported, "effective": is_effective})

    total = len(report.references)
    result = {
        "citation_accuracy": round(effective / total, 4) if total else 0.0,
        "effective_citations": effective,
        "total_citations": total,
        "search_calls": count_search_calls(workspace),
        "per_citation": records,
        "empty_report": total == 0,
        "offline": offline,
    }
    workspace.write_artifact("eval/fact.json", result)
    return result


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def aggregate(workspace) -> dict:
    """Bundle whatever component results exist into eval/summary.json."""
    summary = {}
    for name in ("icq", "mpq", "fact"):
        if workspace.has_artifact(f"eval/{name}.json"):
            summary[name] = workspace.read_artifact(f"eval/{name}.json")
        else:
            summary[name] = "absent"
    workspace.write_artifact("eval/summary.json", summary)
    return summary
