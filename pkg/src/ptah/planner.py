"""Visual-aware research planning: the search loop and plan parsing.

The planner explores with text search in a fixed thought/action step
grammar, then emits the plan as JSON. Parsing never throws for content
problems; violations come back as structured findings the verifier turns
into rule issues.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .errors import StageFailure
from .gateway import DecodeParams, Message, ModelRequest, extract_json
from .models import ToolCall, TrajectoryStep
from .prompts import load_prompt
from .react import parse_react

VISUAL_FORMS = ("chart", "diagram", "screenshot", "photo", "illustration")
PLACEMENT_HINTS = ("lead", "inline", "summary")
EVIDENCE_TYPES = ("statistic", "quote", "case_study", "definition", "comparison")

PLANNER_TOOLS = ("text_search", "fetch_page")


def plan_schema() -> dict:
    ref = resources.files("ptah").joinpath("schemas/plan.json")
    return json.loads(ref.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class VisualSpec:
    placement_hint: str
    role: str
    form: str
    description: str

    def to_dict(self) -> dict:
        return {"placement_hint": self.placement_hint, "role": self.role,
                "form": self.form, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "VisualSpec":
        return cls(placement_hint=d["placement_hint"], role=d.get("role", ""),
                   form=d["form"], description=d["description"])


@dataclass(frozen=True)
class SectionPlan:
    id: str
    title: str
    goals: tuple
    evidence_types: tuple = ()
    visual_specs: tuple = ()
    writing_instructions: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "goals": list(self.goals),
            "evidence_types": list(self.evidence_types),
            "visual_specs": [v.to_dict() for v in self.visual_specs],
            "writing_instructions": self.writing_instructions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SectionPlan":
        return cls(
            id=d["id"],
            title=d.get("title", ""),
            goals=tuple(d.get("goals", [])),
            evidence_types=tuple(d.get("evidence_types", [])),
            visual_specs=tuple(VisualSpec.from_dict(v) for v in d.get("visual_specs", [])),
            writing_instructions=d.get("writing_instructions", ""),
        )


@dataclass(frozen=True)
class Plan:
    overview: str
    sections: tuple

    def to_dict(self) -> dict:
        return {"overview": self.overview, "sections": [s.to_dict() for s in self.sections]}

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        return cls(overview=d.get("overview", ""),
                   sections=tuple(SectionPlan.from_dict(s) for s in d.get("sections", [])))

    def section(self, section_id: str) -> Optional[SectionPlan]:
        for s in self.sections:
            if s.id == section_id:
                return s
        return None


@dataclass
class PlanViolation:
    code: str
    message: str
    location: str = ""


@dataclass
class ParsedPlan:
    plan: Optional[Plan] = None
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.plan is not None and not self.violations


def parse_plan(raw: str) -> ParsedPlan:
    """Parse plan JSON and check every Plan invariant.

    Violations are returned, never raised, so the verifier can report them
    all at once.
    """
    result = ParsedPlan()
    try:
        value = raw if isinstance(raw, dict) else extract_json(raw)
    except ValueError as exc:
        result.violations.append(PlanViolation("bad-json", str(exc)))
        return result
    if not isinstance(value, dict):
        result.violations.append(PlanViolation("bad-json", "plan must be a JSON object"))
        return result

    sections = value.get("sections")
    if not isinstance(sections, list) or not sections:
        result.violations.append(PlanViolation("no-sections", "plan needs at least one section"))
        return result
    if not str(value.get("overview", "")).strip():
        result.violations.append(PlanViolation("no-overview", "plan overview is empty"))

    seen_ids = set()
    for i, sec in enumerate(sections):
        loc = f"sections/{i}"
        if not isinstance(sec, dict):
            result.violations.append(PlanViolation("bad-section", "section must be an object", loc))
            continue
        sid = sec.get("id", "")
        if not sid:
            result.violations.append(PlanViolation("no-id", "section id missing", loc))
        elif sid in seen_ids:
            result.violations.append(PlanViolation("dup-id", f"duplicate section id {sid!r}", loc))
        seen_ids.add(sid)
        goals = sec.get("goals")
        if not isinstance(goals, list) or not [g for g in goals if str(g).strip()]:
            result.violations.append(PlanViolation("empty-goals", f"section {sid!r} has no goals", loc))
        for j, et in enumerate(sec.get("evidence_types", []) or []):
            if et not in EVIDENCE_TYPES:
                result.violations.append(
                    PlanViolation("bad-evidence-type", f"unknown evidence type {et!r}", f"{loc}/evidence_types/{j}"))
        for j, vs in enumerate(sec.get("visual_specs", []) or []):
            vloc = f"{loc}/visual_specs/{j}"
            if not isinstance(vs, dict):
                result.violations.append(PlanViolation("bad-visual-spec", "visual spec must be an object", vloc))
                continue
            if vs.get("form") not in VISUAL_FORMS:
                result.violations.append(
                    PlanViolation("bad-visual-form", f"unknown visual form {vs.get('form')!r}", vloc))
            if vs.get("placement_hint") not in PLACEMENT_HINTS:
                result.violations.append(
                    PlanViolation("bad-placement", f"unknown placement {vs.get('placement_hint')!r}", vloc))
            if not str(vs.get("description", "")).strip():
                result.violations.append(PlanViolation("empty-description", "visual spec description empty", vloc))

    if not result.violations:
        try:
            result.plan = Plan.from_dict(value)
        except (KeyError, TypeError) as exc:
            result.violations.append(PlanViolation("bad-structure", f"plan structure invalid: {exc}"))
    return result


@dataclass
class PlanningBudget:
    max_steps: int = 12
    max_searches: int = 8

    def __post_init__(self):
        if self.max_steps < 1 or self.max_searches < 0:
            raise ValueError("planning budget must be positive")


class PlanningFailure(StageFailure):
    def __init__(self, message: str, trajectory: list):
        super().__init__("plan", message)
        self.trajectory = trajectory


def run_planning(gateway, runtime, query, budget: PlanningBudget, feedback: str = ""):
    """Iterative search loop ending in a parsed plan.

    Returns (Plan, trajectory). The caller is responsible for verification
    and persistence; the plan returned here is structurally valid but not
    yet accepted. ``feedback`` carries the previous verifier review on
    revision rounds.
    """
    template = load_prompt("planner")
    base_prompt = template.format(
        query=query.text, language=query.language,
        max_steps=budget.max_steps, max_searches=budget.max_searches,
        feedback=feedback)
    messages = [Message("user", base_prompt)]
    trajectory: list = []
    searches = 0

    for step_no in range(1, budget.max_steps + 1):
        request = ModelRequest(role_hint="planner", messages=tuple(messages),
                               decode=DecodeParams(temperature=0.7))
        response = gateway.complete(request)
        messages.append(Message("assistant", response.text))
        step = parse_react(response.text)

        if step.malformed:
            trajectory.append(TrajectoryStep(index=step_no, thought=response.text.strip(),
                                             timestamp=runtime.workspace.clock.now_iso()))
            messages.append(Message("user", "Protocol violation: " + "; ".join(step.errors)
                                    + " Reply with exactly one Thought/Action or Thought/Final step."))
            continue

        if step.action is not None:
            tool = step.action["tool"]
            args = step.action.get("args", {})
            if tool not in PLANNER_TOOLS:
                trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                                 timestamp=runtime.workspace.clock.now_iso()))
                messages.append(Message("user", f"Tool {tool!r} is not available during planning."))
                continue
            if tool == "text_search":
                if searches >= budget.max_searches:
                    trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                                     timestamp=runtime.workspace.clock.now_iso()))
                    messages.append(Message("user", "Search budget exhausted; produce the Final plan."))
                    continue
                searches += 1
            call = ToolCall(tool=tool, args=args, step_index=step_no)
            observation = runtime.dispatch(call)
            trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                             action=call, observation=observation,
                                             timestamp=runtime.workspace.clock.now_iso()))
            messages.append(Message("user", "Observation: "
                                    + json.dumps(observation.payload, ensure_ascii=False, sort_keys=True)))
            continue

        # Final plan attempt
        trajectory.append(TrajectoryStep(index=step_no, thought=step.thought,
                                         timestamp=runtime.workspace.clock.now_iso()))
        parsed = parse_plan(step.final)
        if parsed.ok:
            return parsed.plan, trajectory
        problems = "; ".join(f"{v.code}: {v.message}" for v in parsed.violations)
        messages.append(Message("user",
                                f"The plan failed validation: {problems}. "
                                "Reply with a corrected Thought/Final step."))

    raise PlanningFailure(f"no valid plan within {budget.max_steps} steps", trajectory)
