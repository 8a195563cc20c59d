#!/usr/bin/env python3
"""Regenerate the committed fixtures: web corpus, mock transcript, config.

The transcript is built by replaying the writer/refine code paths over the
authored drafts, so scripted responses (block arrays, HTML echoes, image
decisions) stay correct by construction. Run from the repo root:

    python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import io
import json
import shutil
import sys
import tempfile
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from ptah.clock import FixedClock  # noqa: E402
from ptah.models import (  # noqa: E402
    Query,
    ResearchState,
    StageArtifact,
    TextBlock,
    ToolCall,
    ToolObservation,
    TrajectoryStep,
    VisualBlock,
    WorkingState,
    serialize_state,
)
from ptah.planner import Plan  # noqa: E402
from ptah.researcher import package_from_model  # noqa: E402
from ptah.tools import FixtureAdapters, MockChartRunner  # noqa: E402
from ptah.tools.base import ToolRuntime  # noqa: E402
from ptah.urls import citation_id_for  # noqa: E402
from ptah.vwm import harvest_images, rule_filter  # noqa: E402
from ptah.workspace import Workspace  # noqa: E402
from ptah.writer import (  # noqa: E402
    ComposedSection,
    SectionDraft,
    assemble_report,
    parse_directives,
    resolve_images,
)
from dataclasses import replace  # noqa: E402

FIX = ROOT / "fixtures"

QUERY_TEXT = "Solar adoption trends in rural microgrids"

URL_MARKET = "https://example.org/solar/market"
URL_RURAL = "https://example.org/solar/rural"
URL_TECH = "https://example.org/solar/tech"
URL_STORAGE = "https://example.org/solar/storage"
IMG_CHART = "https://example.org/img/market-chart.png"
IMG_ICON = "https://example.org/img/icon.png"
IMG_BANNER = "https://example.org/img/banner.png"
IMG_DIAGRAM = "https://example.org/img/tech-diagram.png"
IMG_PHOTO = "https://example.org/img/storage-photo.png"
IMG_SVG = "https://example.org/img/decorative.svg"
IMG_AERIAL = "https://example.org/img/aerial.png"

CID = {name: citation_id_for(url) for name, url in
       (("market", URL_MARKET), ("rural", URL_RURAL),
        ("tech", URL_TECH), ("storage", URL_STORAGE))}

CHART_SCRIPT = (
    "import matplotlib\n"
    "matplotlib.use('Agg')\n"
    "import matplotlib.pyplot as plt\n"
    "labels = list(data)\n"
    "values = [data[k] for k in labels]\n"
    "fig, ax = plt.subplots(figsize=(6, 4))\n"
    "ax.bar(labels, values, color='#2563eb')\n"
    "ax.set_ylabel('Efficiency (%)')\n"
    "fig.savefig(output_path, dpi=100)\n"
)
CHART_DATA = {"2022": 88, "2023": 91, "2024": 94}


def fig_png(width, height, color, label=""):
    img = Image.new("RGB", (width, height), color)
    if label:
        draw = ImageDraw.Draw(img)
        draw.rectangle([8, 8, width - 9, height - 9], outline=(255, 255, 255), width=3)
        draw.text((16, 16), label, fill=(255, 255, 255))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def build_web():
    web = FIX / "web"
    if web.exists():
        shutil.rmtree(web)
    (web / "pages").mkdir(parents=True)
    (web / "images").mkdir()

    images = {
        "market-chart.png": fig_png(800, 500, (16, 60, 120), "adoption trend"),
        "icon.png": fig_png(64, 64, (200, 40, 40)),
        "banner.png": fig_png(1600, 200, (40, 140, 60), "banner"),
        "tech-diagram.png": fig_png(1024, 768, (90, 50, 140), "storage diagram"),
        "storage-photo.png": fig_png(600, 400, (150, 110, 30), "battery shed"),
        "aerial.png": fig_png(900, 600, (30, 130, 150), "aerial view"),
    }
    for name, data in images.items():
        (web / "images" / name).write_bytes(data)
    (web / "images" / "decorative.svg").write_text(
        '<svg xmlns="http://www.w3.org/2000/svg" width="100" height="100">'
        '<circle cx="50" cy="50" r="40" fill="teal"/></svg>', encoding="utf-8")

    pages = {
        "market.html": f"""<html><head><title>Rural solar market report</title></head><body>
<h1>Adoption of rural microgrids</h1>
<p>Adoption of rural microgrids accelerated through 2024, with the adoption
share reaching 42.5 % of candidate villages. Program operators reported the
adoption trend chart below as the clearest signal of momentum.</p>
<img src="/img/market-chart.png" alt="adoption trend chart">
<p>Total installed capacity climbed to 1,200 MW across surveyed regions,
up from 870 MW a year earlier.</p>
<img src="/img/icon.png" alt="logo">
</body></html>""",
        "rural.html": f"""<html><head><title>Village deployment survey</title></head><body>
<h1>Village deployment survey</h1>
<img src="/img/banner.png" alt="banner">
<p>Field teams surveyed 9,640 households connected to village microgrids.
Capacity additions of 1,200 MW match the market report.</p>
<img src="/img/market-chart.png" alt="adoption trend chart">
</body></html>""",
        "tech.html": f"""<html><head><title>Battery storage technology brief</title></head><body>
<h1>Battery storage technology brief</h1>
<p>Modern lithium banks now deliver 94 % round-trip efficiency in village
duty cycles, and falling pack prices keep pushing deployments forward.</p>
<img src="/img/tech-diagram.png" alt="storage system diagram">
<img src="/img/decorative.svg" alt="decoration">
</body></html>""",
        "storage.html": f"""<html><head><title>Village storage sizing guide</title></head><body>
<h1>Village storage sizing guide</h1>
<p>A typical village bank stores 30 kWh, sized for evening lighting and
phone charging loads.</p>
<img src="/img/storage-photo.png" alt="battery shed photo">
</body></html>""",
    }
    for name, html in pages.items():
        (web / "pages" / name).write_text(html, encoding="utf-8")

    index = {
        "search": {
            "solar microgrid adoption": [
                {"url": URL_MARKET, "title": "Rural solar market report",
                 "snippet": "adoption share and capacity statistics"},
                {"url": URL_RURAL, "title": "Village deployment survey",
                 "snippet": "household-level deployment survey"},
            ],
            "solar microgrid market size": [
                {"url": URL_MARKET, "title": "Rural solar market report",
                 "snippet": "adoption share and capacity statistics"},
                {"url": URL_RURAL, "title": "Village deployment survey",
                 "snippet": "household-level deployment survey"},
            ],
            "microgrid battery storage technology": [
                {"url": URL_TECH, "title": "Battery storage technology brief",
                 "snippet": "round-trip efficiency trends"},
                {"url": URL_STORAGE, "title": "Village storage sizing guide",
                 "snippet": "typical bank sizing"},
            ],
        },
        "image_search": {
            "rural microgrid aerial photo": [
                {"url": IMG_AERIAL, "title": "Aerial view of a village microgrid"},
            ],
        },
        "pages": {
            URL_MARKET: "pages/market.html",
            URL_RURAL: "pages/rural.html",
            URL_TECH: "pages/tech.html",
            URL_STORAGE: "pages/storage.html",
        },
        "files": {
            IMG_CHART: "images/market-chart.png",
            IMG_ICON: "images/icon.png",
            IMG_BANNER: "images/banner.png",
            IMG_DIAGRAM: "images/tech-diagram.png",
            IMG_PHOTO: "images/storage-photo.png",
            IMG_SVG: "images/decorative.svg",
            IMG_AERIAL: "images/aerial.png",
        },
    }
    (web / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    return web


PLAN_PAYLOAD = {
    "overview": "Survey how quickly rural communities are adopting solar "
                "microgrids and which storage technology underpins them.",
    "sections": [
        {
            "id": "sec-overview",
            "title": "Overview of rural adoption",
            "goals": ["Quantify the adoption share of rural microgrids",
                      "Track installed capacity growth"],
            "evidence_types": ["statistic", "comparison"],
            "visual_specs": [
                {"placement_hint": "inline", "role": "trend-chart", "form": "chart",
                 "description": "Adoption trend over recent years"},
            ],
            "writing_instructions": "Lead with the headline adoption numbers.",
        },
        {
            "id": "sec-tech",
            "title": "Storage technology",
            "goals": ["Describe battery efficiency progress",
                      "Give typical storage sizing for a village"],
            "evidence_types": ["statistic", "definition"],
            "visual_specs": [
                {"placement_hint": "inline", "role": "efficiency-chart", "form": "chart",
                 "description": "Battery round-trip efficiency by year"},
                {"placement_hint": "inline", "role": "aerial-photo", "form": "photo",
                 "description": "What a deployed village microgrid looks like"},
            ],
            "writing_instructions": "Keep the sizing guidance practical.",
        },
    ],
}

PKG_OVERVIEW = {
    "section_id": "sec-overview",
    "key_findings": [
        "Rural adoption reached 42.5 % of candidate villages in 2024",
        "Installed capacity grew to 1,200 MW",
    ],
    "evidence": [
        {"claim": "Adoption accelerated through 2024",
         "supporting_quote": "Adoption of rural microgrids accelerated through 2024, "
                             "with the adoption share reaching 42.5 % of candidate villages.",
         "citation_url": URL_MARKET},
        {"claim": "Survey coverage spans nearly ten thousand households",
         "supporting_quote": "Field teams surveyed 9,640 households connected to "
                             "village microgrids.",
         "citation_url": URL_RURAL},
    ],
    "numeric_facts": [
        {"name": "rural adoption share", "value": "42.5", "unit": "%",
         "source_url": URL_MARKET},
        {"name": "installed capacity", "value": "1,200", "unit": "MW",
         "source_url": URL_MARKET},
    ],
    "tables": [],
    "references": [
        {"url": URL_MARKET, "title": "Rural solar market report"},
        {"url": URL_RURAL, "title": "Village deployment survey"},
    ],
    "writing_instructions": "Open with adoption share, then capacity growth.",
}

PKG_TECH = {
    "section_id": "sec-tech",
    "key_findings": [
        "Battery round-trip efficiency reached 94 %",
        "A typical village bank stores 30 kWh",
    ],
    "evidence": [
        {"claim": "Round-trip efficiency is now very high",
         "supporting_quote": "Modern lithium banks now deliver 94 % round-trip "
                             "efficiency in village duty cycles.",
         "citation_url": URL_TECH},
        {"claim": "Village banks are modestly sized",
         "supporting_quote": "A typical village bank stores 30 kWh, sized for "
                             "evening lighting and phone charging loads.",
         "citation_url": URL_STORAGE},
    ],
    "numeric_facts": [
        {"name": "round-trip efficiency", "value": "94", "unit": "%",
         "source_url": URL_TECH},
        {"name": "typical storage bank", "value": "30", "unit": "kWh",
         "source_url": URL_STORAGE},
    ],
    "tables": [],
    "references": [
        {"url": URL_TECH, "title": "Battery storage technology brief"},
        {"url": URL_STORAGE, "title": "Village storage sizing guide"},
    ],
    "writing_instructions": "Explain efficiency first, then sizing.",
}

SEC_OVERVIEW_MD = (
    "## Overview of rural adoption\n\n"
    "Rural microgrid programs accelerated sharply: the adoption share reached "
    f"42.5 % of candidate villages in 2024 [cite:{CID['market']}].\n\n"
    '<img-op type="reference" role="trend-chart">adoption trend chart</img-op>'
    "\n\nTotal installed capacity climbed to 1,200 MW across surveyed regions, "
    f"with 9,640 households connected [cite:{CID['rural']}].\n"
)

SEC_TECH_MD = (
    "## Storage technology\n\n"
    f"Modern battery banks deliver 94 % round-trip efficiency [cite:{CID['tech']}], "
    f"and a typical village bank stores 30 kWh [cite:{CID['storage']}].\n\n"
    '<img-op type="chart" role="efficiency-chart">'
    + json.dumps({"script": CHART_SCRIPT, "data": CHART_DATA})
    + "</img-op>"
    '<img-op type="search" role="aerial-photo">rural microgrid aerial photo</img-op>'
    "\n\nFalling pack prices keep pushing village deployments forward "
    f"[cite:{CID['tech']}].\n"
)

CONCLUSION_MD = (
    "## Conclusion\n\n"
    "Rural microgrids pair fast adoption with maturing storage: a 42.5 % "
    f"adoption share [cite:{CID['market']}] rests on batteries that now reach "
    f"94 % round-trip efficiency [cite:{CID['tech']}]. The remaining work is "
    "mostly economic, not technical.\n"
)


def react(thought, tool=None, args=None, final=None):
    if final is not None:
        return f"Thought: {thought}\nFinal: " + json.dumps(final, ensure_ascii=False)
    return f"Thought: {thought}\nAction: " + json.dumps(
        {"tool": tool, "args": args}, ensure_ascii=False)


def rubric(scores, strengths, weaknesses, improvements):
    return json.dumps({"scores": scores, "strengths": strengths,
                       "weaknesses": weaknesses, "improvements": improvements})


def replay_pipeline(web_dir):
    """Re-run the deterministic tail of the pipeline to compute the block
    report, image decisions, and HTML echo the transcript must contain."""
    clock = FixedClock()
    tmp = Path(tempfile.mkdtemp(prefix="ptah-gen-"))
    query = Query(text=QUERY_TEXT, id="qgen", language="en")
    ws = Workspace.init(query, tmp / "ws", clock=clock)
    adapters = FixtureAdapters(web_dir, chart_runner=MockChartRunner())

    plan = Plan.from_dict(PLAN_PAYLOAD)
    packages = {
        "sec-overview": package_from_model(PKG_OVERVIEW, clock),
        "sec-tech": package_from_model(PKG_TECH, clock),
    }

    # Fetch pages exactly as each section's investigation will.
    section_pages = {"sec-overview": [URL_MARKET, URL_RURAL],
                     "sec-tech": [URL_TECH, URL_STORAGE]}
    selector_keep = {"sec-overview": {"market-chart.png": "trend-chart"},
                     "sec-tech": {"tech-diagram.png": "architecture-diagram"}}
    file_sha = {}
    for name in ("market-chart.png", "tech-diagram.png", "aerial.png"):
        import hashlib

        file_sha[name] = hashlib.sha256((web_dir / "images" / name).read_bytes()).hexdigest()

    selector_batches = {}
    vwm_slices = {}
    for sid, urls in section_pages.items():
        runtime = ToolRuntime(adapters, ws, scope=sid, query_text=QUERY_TEXT)
        from ptah.tools.web import PageDocument

        for url in urls:
            runtime.fetch_page(url)
        pages = [PageDocument.from_dict(d) for d in runtime.page_store.all_pages()]
        candidates = rule_filter(harvest_images(runtime, pages, sid))
        passed = [c for c in candidates if c.status == "rule_passed"]
        selector_batches[sid] = passed
        keep_map = {file_sha[n]: role for n, role in selector_keep[sid].items()}
        slice_ = []
        for c in passed:
            if c.asset_id in keep_map:
                slice_.append(replace(c, status="selected",
                                      intended_role=keep_map[c.asset_id]))
        vwm_slices[sid] = slice_

    writer_runtime = ToolRuntime(adapters, ws, scope="plan", query_text=QUERY_TEXT)
    drafts = {
        "sec-overview": SectionDraft(
            section_id="sec-overview", markdown_with_tags=SEC_OVERVIEW_MD,
            directives=parse_directives(SEC_OVERVIEW_MD, "sec-overview")[1],
            citations_used=[CID["market"], CID["rural"]]),
        "sec-tech": SectionDraft(
            section_id="sec-tech", markdown_with_tags=SEC_TECH_MD,
            directives=parse_directives(SEC_TECH_MD, "sec-tech")[1],
            citations_used=[CID["tech"], CID["storage"]]),
    }
    composed = []
    for section in plan.sections:
        blocks, failures = resolve_images(drafts[section.id], vwm_slices[section.id],
                                          writer_runtime)
        assert not failures, failures
        composed.append(ComposedSection(section_id=section.id,
                                        draft=drafts[section.id], blocks=blocks))
    conclusion_draft = SectionDraft(section_id="conclusion",
                                    markdown_with_tags=CONCLUSION_MD, directives=[],
                                    citations_used=[CID["market"], CID["tech"]])
    conclusion_blocks, _ = resolve_images(conclusion_draft, [], writer_runtime)
    conclusion = ComposedSection(section_id="conclusion", draft=conclusion_draft,
                                 blocks=conclusion_blocks)
    report = assemble_report(plan, composed, conclusion, packages,
                             title=QUERY_TEXT, asset_store=ws.assets)

    from ptah.htmlgen import generate_html

    html = generate_html(report, ws.assets).html

    shutil.rmtree(tmp)
    return report, selector_batches, html


def build_transcript(web_dir):
    report, selector_batches, html_echo = replay_pipeline(web_dir)

    # Section-refine identity payloads
    section_texts = {}
    for block in report.blocks:
        if isinstance(block, TextBlock):
            section_texts.setdefault(block.section_id, []).append(block.markdown)
    visual_indices = [i for i, b in enumerate(report.blocks) if isinstance(b, VisualBlock)]

    routes = []

    # Planner: one grounding search, then the plan.
    routes.append({"role": "planner", "script": [
        react("Survey the landscape before planning.",
              tool="text_search", args={"query": "solar microgrid adoption", "k": 2}),
        react("The search grounds a two-section structure.", final=PLAN_PAYLOAD),
    ]})

    # Page summaries, routed by page-distinctive phrases. The market and
    # rural pages are summarized twice: during planning and during the
    # overview section's investigation.
    summaries = {
        "Adoption of rural microgrids": (
            "Market report: adoption share hit 42.5 % in 2024; installed "
            "capacity reached 1,200 MW (up from 870 MW).", 2),
        "Village deployment survey": (
            "Survey of 9,640 connected households; capacity additions of "
            "1,200 MW corroborate the market report.", 2),
        "Battery storage technology brief": (
            "Technology brief: lithium banks deliver 94 % round-trip "
            "efficiency; pack prices keep falling.", 1),
        "Village storage sizing guide": (
            "Sizing guide: a typical village bank stores 30 kWh for evening "
            "loads.", 1),
    }
    for phrase, (summary, count) in summaries.items():
        routes.append({"role": "researcher",
                       "contains": ["Summarize the following page", phrase],
                       "script": [summary] * count})

    # Section researchers.
    routes.append({"role": "researcher", "contains": "Section: sec-overview — ",
                   "script": [
                       react("Find adoption statistics.", tool="text_search",
                             args={"query": "solar microgrid market size", "k": 2}),
                       react("The two fetched sources cover both goals.",
                             final=PKG_OVERVIEW),
                   ]})
    routes.append({"role": "researcher", "contains": "Section: sec-tech — ",
                   "script": [
                       react("Find storage technology facts.", tool="text_search",
                             args={"query": "microgrid battery storage technology", "k": 2}),
                       react("Efficiency and sizing are both sourced.",
                             final=PKG_TECH),
                   ]})

    # Verifier rubrics: section routes first, plan route on its own marker.
    routes.append({"role": "verifier", "contains": "Section sec-overview (",
                   "script": [rubric({"claim_support": 5, "goal_coverage": 4,
                                      "consistency": 5, "visual_relevance": 4},
                                     "Well-quoted evidence for both goals.",
                                     "Could use one more comparison point.",
                                     "Add a year-over-year comparison next time.")]})
    routes.append({"role": "verifier", "contains": "Section sec-tech (",
                   "script": [rubric({"claim_support": 5, "goal_coverage": 5,
                                      "consistency": 4, "visual_relevance": 4},
                                     "Efficiency and sizing are directly sourced.",
                                     "Sizing guidance is thin on load profiles.",
                                     "Mention load assumptions explicitly.")]})
    routes.append({"role": "verifier", "contains": "Stage: plan",
                   "script": [rubric({"query_coverage": 5, "section_coherence": 4,
                                      "visual_argument_relevance": 4},
                                     "Covers adoption and technology cleanly.",
                                     "Two sections is minimal coverage.",
                                     "Consider an economics section for depth.")]})

    # Selector decisions per section batch.
    for sid, role_name in (("sec-overview", "trend-chart"),
                           ("sec-tech", "architecture-diagram")):
        decisions = []
        for c in selector_batches[sid]:
            keep = (sid == "sec-overview") or c.width >= 1000
            decisions.append({"asset_id": c.asset_id[:12], "keep": keep,
                              "role": role_name if keep else ""})
        routes.append({"role": "selector", "contains": f"section {sid}",
                       "script": [json.dumps({"decisions": decisions})]})

    # Writer: compose sections, then the conclusion.
    routes.append({"role": "writer", "contains": "Section: sec-overview — ",
                   "script": [json.dumps({"markdown": SEC_OVERVIEW_MD,
                                          "citations_used": [CID["market"], CID["rural"]]},
                                         ensure_ascii=False)]})
    routes.append({"role": "writer", "contains": "Section: sec-tech — ",
                   "script": [json.dumps({"markdown": SEC_TECH_MD,
                                          "citations_used": [CID["tech"], CID["storage"]]},
                                         ensure_ascii=False)]})
    routes.append({"role": "writer", "contains": "concluding section",
                   "script": [json.dumps({"markdown": CONCLUSION_MD,
                                          "citations_used": [CID["market"], CID["tech"]]},
                                         ensure_ascii=False)]})

    # Test-time refinement: identity responses computed from the replay.
    for sid in ("sec-overview", "sec-tech", "conclusion"):
        routes.append({"role": "writer",
                       "contains": [f"Section: {sid}\nReport query"],
                       "script": [json.dumps({"texts": section_texts[sid]},
                                             ensure_ascii=False)]})
    routes.append({"role": "judge", "contains": "Review every visual element",
                   "script": [json.dumps({"decisions": [
                       {"index": i, "action": "Keep",
                        "rationale": "clear and on-topic"} for i in visual_indices]})]})
    routes.append({"role": "writer", "contains": "Improve the global organization",
                   "script": [json.dumps({"blocks": [b.to_dict() for b in report.blocks]},
                                         ensure_ascii=False)]})
    routes.append({"role": "writer", "contains": "Polish the HTML",
                   "script": [html_echo]})

    # Evaluation judges (used only by --until eval runs).
    icq = json.dumps({"vc": 4, "cma": 5, "ic": 4, "es": 4,
                      "rationale": {"vc": "legible", "cma": "placed with its claim",
                                    "ic": "adds a trend words lack", "es": "backs the number"}})
    routes.append({"role": "judge", "contains": "Judge how well the attached image",
                   "script": [icq] * len(visual_indices)})
    routes.append({"role": "judge", "contains": "visible viewport",
                   "script": [json.dumps({"dlb": 4, "is": 4, "ved": 3, "ve": 4,
                                          "rationale": {"dlb": "balanced", "is": "clear headings",
                                                        "ved": "charts and photos", "ve": "even rhythm"}})]})

    return {"routes": routes}


def build_state_small():
    clock = FixedClock()
    steps = [
        TrajectoryStep(index=1, thought="Scope the question.",
                       action=ToolCall(tool="text_search",
                                       args={"query": "solar microgrid adoption", "k": 2},
                                       step_index=1),
                       observation=ToolObservation(tool="text_search",
                                                   payload={"results": []},
                                                   fetched_urls=(URL_MARKET,)),
                       timestamp=clock.now_iso()),
        TrajectoryStep(index=2, thought="Read the market report.",
                       action=ToolCall(tool="fetch_page", args={"url": URL_MARKET},
                                       step_index=2),
                       observation=ToolObservation(tool="fetch_page",
                                                   payload={"url": URL_MARKET,
                                                            "markdown": "# Adoption"},
                                                   fetched_urls=(URL_MARKET,)),
                       timestamp=clock.now_iso()),
        TrajectoryStep(index=3, thought="Enough grounding to draft the plan.",
                       timestamp=clock.now_iso()),
    ]
    state = ResearchState(
        query=Query(text=QUERY_TEXT, id="qfix", language="en"),
        working=WorkingState(artifacts=[
            StageArtifact(stage="plan", kind="plan", payload=PLAN_PAYLOAD)]),
        trajectory=steps)
    (FIX / "state_small.json").write_bytes(serialize_state(state))


def main():
    FIX.mkdir(exist_ok=True)
    web = build_web()
    transcript = build_transcript(web)
    run_dir = FIX / "mock_run"
    run_dir.mkdir(exist_ok=True)
    (run_dir / "transcript.json").write_text(
        json.dumps(transcript, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8")
    (run_dir / "config.yaml").write_text(
        "mode: mock\n"
        "transcript: transcript.json\n"
        "fixtures: ../web\n"
        "tools:\n"
        "  chart_runner: mock\n",
        encoding="utf-8")
    build_state_small()

    schemas = ROOT / "schemas"
    schemas.mkdir(exist_ok=True)
    shutil.copyfile(ROOT / "src" / "ptah" / "schemas" / "plan.json",
                    schemas / "plan.json")
    print(f"fixtures written under {FIX}")


if __name__ == "__main__":
    main()
