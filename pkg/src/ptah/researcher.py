"""Parallel per-section investigation producing verified research packages.

Each section gets its own tool runtime (so its visited-URL ledger is
isolated), its own trajectory, and its own revision loop against the
package verifier. After acceptance the section's pages are harvested into
Visual Working Memory candidates; the per-section results are merged into
one index, in plan order, once every section is done.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import StageFailure
from .gateway import DecodeParams, Message, ModelRequest, extract_json
from .models import Citation, NumericFact, ToolCall, TrajectoryStep
from .prompts import load_prompt
from .react import parse_react
from .tools.base import ToolRuntime
from .tools.web import PageDocument
from .urls import canonical_url, citation_id_for, is_valid_url
from .verifier import revision_loop, verify_package
from .vwm import VisualWorkingMemory, harvest_images, rule_filter, vlm_select

RESEARCHER_TOOLS = ("text_search", "fetch_page")

DEFAULT_SECTION_MAX_STEPS = 15
DEFAULT_SECTION_MAX_SEARCHES = 6
DEFAULT_FAN_OUT = 4


@dataclass(frozen=True)
class Evidence:
    claim: str
    supporting_quote: str
    citation_id: str

    def to_dict(self) -> dict:
        return {"claim": self.claim, "supporting_quote": self.supporting_quote,
                "citation_id": self.citation_id}

    @classmethod
    def from_dict(cls, d: dict) -> "Evidence":
        return cls(claim=d["claim"], supporting_quote=d.get("supporting_quote", ""),
                   citation_id=d["citation_id"])


@dataclass(frozen=True)
class TableData:
    caption: str
    rows: tuple

    def to_dict(self) -> dict:
        return {"caption": self.caption, "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict) -> "TableData":
        return cls(caption=d.get("caption", ""),
                   rows=tuple(tuple(str(c) for c in r) for r in d.get("rows", [])))


@dataclass
class ResearchPackage:
    section_id: str
    key_findings: list = field(default_factory=list)
    evidence: list = field(default_factory=list)  # list[Evidence]
    numeric_facts: list = field(default_factory=list)  # list[NumericFact]
    tables: list = field(default_factory=list)  # list[TableData]
    references: list = field(default_factory=list)  # list[Citation]
    writing_instructions: str = ""

    def to_dict(self) -> dict:
        return {
            "section_id": self.section_id,
            "key_findings": list(self.key_findings),
            "evidence": [e.to_dict() for e in self.evidence],
            "numeric_facts": [f.to_dict() for f in self.numeric_facts],
            "tables": [t.to_dict() for t in self.tables],
            "references": [c.to_dict() for c in self.references],
            "writing_instructions": self.writing_instructions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResearchPackage":
        return cls(
            section_id=d["section_id"],
            key_findings=list(d.get("key_findings", [])),
            evidence=[Evidence.from_dict(e) for e in d.get("evidence", [])],
            numeric_facts=[NumericFact.from_dict(f) for f in d.get("numeric_facts", [])],
            tables=[TableData.from_dict(t) for t in d.get("tables", [])],
            references=[Citation.from_dict(c) for c in d.get("references", [])],
            writing_instructions=d.get("writing_instructions", ""),
        )

    def citation(self, citation_id: str):
        for c in self.references:
            if c.id == citation_id:
                return c
        return None


PACKAGE_SCHEMA = {
    "type": "object",
    "properties": {
        "section_id": {"type": "string", "minLength": 1},
        "key_findings": {"type": "array", "items": {"type": "string"}},
        "evidence": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "claim": {"type": "string", "minLength": 1},
                    "supporting_quote": {"type": "string"},
                    "citation_url": {"type": "string", "minLength": 1},
                },
                "required": ["claim", "citation_url"],
                "additionalProperties": False,
            },
        },
        "numeric_facts": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "value": {"type": ["string", "number"]},
                    "unit": {"type": "string"},
                    "source_url": {"type": "string", "minLength": 1},
                },
                "required": ["name", "value", "source_url"],
                "additionalProperties": False,
            },
        },
        "tables": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "caption": {"type": "string"},
                    "rows": {"type": "array", "items": {"type": "array"}},
                },
                "required": ["rows"],
                "additionalProperties": False,
            },
        },
        "references": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "url": {"type": "string", "minLength": 1},
                    "title": {"type": "string"},
                },
                "required": ["url"],
                "additionalProperties": False,
            },
        },
        "writing_instructions": {"type": "string"},
    },
    "required": ["section_id", "key_findings", "evidence", "references"],
    "additionalProperties": False,
}


def package_from_model(value: dict, clock) -> ResearchPackage:
    """Normalize a model-emitted package: citation ids become URL hashes.

    Model output cites by URL; the harness assigns content-addressed ids,
    unions every cited URL into the reference list, and timestamps access.
    Invalid URLs survive normalization (with a literal-url id) so the
    verifier can flag them instead of this code swallowing them.
    """

    def cid(url: str) -> str:
        try:
            return citation_id_for(url)
        except ValueError:
            return "invalid:" + url

    references: dict = {}

    def ensure_ref(url: str, title: str = "") -> str:
        key = cid(url)
        if key not in references:
            references[key] = Citation(id=key, url=url, title=title,
                                       accessed_at=clock.now_iso())
        return key

    for ref in value.get("references", []):
        ensure_ref(ref["url"], ref.get("title", ""))

    evidence = []
    for ev in value.get("evidence", []):
        key = ensure_ref(ev["citation_url"])
        evidence.append(Evidence(claim=ev["claim"],
                                 supporting_quote=ev.get("supporting_quote", ""),
                                 citation_id=key))
    facts = []
    for f in value.get("numeric_facts", []):
        key = ensure_ref(f["source_url"])
        facts.append(NumericFact(name=f["name"], value=str(f["value"]),
                                 unit=f.get("unit", ""), source=key))
    tables = [TableData.from_dict(t) for t in value.get("tables", [])]
    return ResearchPackage(
        section_id=value["section_id"],
        key_findings=list(value.get("key_findings", [])),
        evidence=evidence,
        numeric_facts=facts,
        tables=tables,
        references=list(references.values()),
        writing_instructions=value.get("writing_instructions", ""),
    )


def precheck_citations(package: ResearchPackage, ledger_urls: set) -> list:
    """Cheap in-loop guard: every reference must already be on the ledger."""
    problems = []
    for c in package.references:
        if not is_valid_url(c.url):
            problems.append(f"reference URL invalid: {c.url!r}")
        elif canonical_url(c.url) not in ledger_urls:
            problems.append(f"reference {c.url} was not fetched in this investigation")
    return problems


@dataclass
class SectionBudget:
    max_steps: int = DEFAULT_SECTION_MAX_STEPS
    max_searches: int = DEFAULT_SECTION_MAX_SEARCHES

    def __post_init__(self):
        if self.max_steps < 1 or self.max_searches < 0:
            raise ValueError("section budget must be positive")


def investigate_section(gateway, runtime, query, section, budget: SectionBudget,
                        feedback: str = ""):
    """ReAct loop for one section. Returns (ResearchPackage, trajectory).

    The final package is schema-validated and citation-prechecked inside
    the loop; violations go back to the model as feedback until the budget
    runs out.
    """
    import jsonschema

    template = load_prompt("researcher")
    goals_text = "\n".join(f"- {g}" for g in section.goals)
    prompt = template.format(
        query=query.text, section_id=section.id, title=section.title,
        goals=goals_text, evidence_types=", ".join(section.evidence_types) or "any",
        max_steps=budget.max_steps, max_searches=budget.max_searches,
        feedback=feedback)
    messages = [Message("user", prompt)]
    trajectory: list = []
    searches = 0
    validator = jsonschema.Draft202012Validator(PACKAGE_SCHEMA)

    for step_no in range(1, budget.max_steps + 1):
        request = ModelRequest(role_hint="researcher", messages=tuple(messages),
                               decode=DecodeParams(temperature=0.7))
        response = gateway.complete(request)
        messages.append(Message("assistant", response.text))
        step = parse_react(response.text)

        if step.malformed:
            trajectory.append(TrajectoryStep(index=step_no, thought=response.text.strip(),
                                             timestamp=runtime.workspace.clock.now_iso()))
            messages.append(Message("user", "Protocol violation: " + "; ".join(step.errors)))
            continue

        if step.action is not None:
            tool = step.action["tool"]
            if tool not in RESEARCHER_TOOLS:
                trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                                 timestamp=runtime.workspace.clock.now_iso()))
                messages.append(Message("user", f"Tool {tool!r} is not available here."))
                continue
            if tool == "text_search":
                if searches >= budget.max_searches:
                    trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                                     timestamp=runtime.workspace.clock.now_iso()))
                    messages.append(Message("user", "Search budget exhausted; finish the package."))
                    continue
                searches += 1
            call = ToolCall(tool=tool, args=step.action.get("args", {}), step_index=step_no)
            observation = runtime.dispatch(call)
            trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                             action=call, observation=observation,
                                             timestamp=runtime.workspace.clock.now_iso()))
            messages.append(Message("user", "Observation: "
                                    + json.dumps(observation.payload, ensure_ascii=False,
                                                 sort_keys=True)))
            continue

        trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                         timestamp=runtime.workspace.clock.now_iso()))
        errors = []
        value = None
        try:
            value = extract_json(step.final)
        except ValueError as exc:
            errors.append(str(exc))
        if value is not None:
            errors.extend(e.message for e in validator.iter_errors(value))
        if not errors:
            package = package_from_model(value, runtime.workspace.clock)
            if package.section_id != section.id:
                errors.append(f"package section_id must be {section.id!r}")
            else:
                errors.extend(precheck_citations(package, set(runtime.ledger.urls())))
            if not errors:
                return package, trajectory
        messages.append(Message("user",
                                "The package failed validation: " + "; ".join(errors)
                                + ". Fix it and reply with a corrected Thought/Final step."))

    raise StageFailure("research",
                       f"section {section.id}: no valid package within {budget.max_steps} steps")


def _feedback_from_verdict(verdict) -> str:
    if verdict is None:
        return ""
    parts = ["Previous attempt was rejected."]
    for issue in verdict.rule_issues:
        parts.append(f"- rule {issue.code}: {issue.message}")
    if verdict.review is not None:
        parts.append(f"Weaknesses: {verdict.review.weaknesses}")
        parts.append(f"Improvements: {verdict.review.improvements}")
    return "\n".join(parts)


def research_section(gateway, adapters, workspace, query, section,
                     budget: SectionBudget, max_rounds: int = 3,
                     select: bool = True):
    """Full per-section pipeline: investigate, verify, harvest, curate.

    Returns (package, candidates). Persists the package, trajectory, and
    verdicts under research/<section_id>/.
    """
    runtime = ToolRuntime(adapters, workspace, scope=section.id, gateway=gateway,
                          query_text=query.text)
    holder: dict = {}

    def produce(round_no, last_verdict):
        package, trajectory = investigate_section(
            gateway, runtime, query, section, budget,
            feedback=_feedback_from_verdict(last_verdict))
        holder["trajectory"] = trajectory
        return package

    def verify(package):
        pages_by_url = {}
        for page_dict in runtime.page_store.all_pages():
            try:
                pages_by_url[canonical_url(page_dict["url"])] = page_dict
            except ValueError:
                continue
        return verify_package(gateway, package, section,
                              set(runtime.ledger.urls()), pages_by_url)

    def persist(verdict_dict, package):
        workspace.write_verdict(section.id, {
            "verdict": verdict_dict,
            "artifact": package.to_dict(),
        })

    package, _ = revision_loop(produce, verify, max_rounds=max_rounds,
                               persist=persist, stage="research")
    workspace.write_artifact(f"research/{section.id}/package.json", package.to_dict())
    workspace.write_artifact(f"research/{section.id}/trajectory.json",
                             [s.to_dict() for s in holder["trajectory"]])

    pages = [PageDocument.from_dict(d) for d in runtime.page_store.all_pages()]
    candidates = harvest_images(runtime, pages, section.id)
    candidates = rule_filter(candidates)
    if select and candidates:
        candidates = vlm_select(gateway, candidates, section.visual_specs, section.id)
    return package, candidates


def run_research(gateway, adapters, workspace, query, plan,
                 budget: SectionBudget = None, fan_out: int = DEFAULT_FAN_OUT,
                 max_rounds: int = 3, select: bool = True) -> dict:
    """Investigate every planned section, concurrently up to ``fan_out``.

    Returns {section_id: ResearchPackage}. If any section exhausts its
    revision rounds the others still persist; the failure then propagates
    naming the bad section(s).
    """
    budget = budget or SectionBudget()
    results: dict = {}
    failures: list = []

    def task(section):
        return research_section(gateway, adapters, workspace, query, section,
                                budget, max_rounds=max_rounds, select=select)

    if fan_out <= 1 or len(plan.sections) == 1:
        outcomes = []
        for section in plan.sections:
            try:
                outcomes.append((section, task(section), None))
            except StageFailure as exc:
                outcomes.append((section, None, exc))
    else:
        with ThreadPoolExecutor(max_workers=fan_out) as pool:
            futures = [(section, pool.submit(task, section)) for section in plan.sections]
            outcomes = []
            for section, future in futures:
                try:
                    outcomes.append((section, future.result(), None))
                except StageFailure as exc:
                    outcomes.append((section, None, exc))

    vwm = VisualWorkingMemory()
    for section, outcome, exc in outcomes:
        if exc is not None:
            failures.append(f"{section.id}: {exc}")
            continue
        package, candidates = outcome
        results[section.id] = package
        vwm.add(candidates)
    vwm.write(workspace)

    if failures:
        raise StageFailure("research", "sections failed: " + "; ".join(failures))
    return results
