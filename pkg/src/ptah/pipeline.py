"""Stage orchestration: plan -> research -> write -> refine -> evaluate.

Each stage function is idempotent against the workspace stage marker, so
re-running a half-finished workspace performs only the remaining stages.
"""

from __future__ import annotations

import hashlib
import json

from .errors import EvalError, StageFailure, StructuredOutputError
from .evaluation import aggregate, fact_metrics, score_icq, score_mpq
from .models import Query, Report, canonical_json
from .planner import Plan, PlanningBudget, parse_plan, run_planning
from .refine import run_tts
from .researcher import ResearchPackage, SectionBudget, run_research
from .tools.base import ToolRuntime
from .verifier import revision_loop, verify_plan
from .vwm import VisualWorkingMemory
from .workspace import Workspace
from .writer import (
    ComposedSection,
    assemble_report,
    compose_conclusion,
    compose_section,
    resolve_images,
)

# --until targets mapped onto the stage ladder
UNTIL_STAGES = {
    "plan": "plan",
    "research": "research",
    "write": "writing",
    "writing": "writing",
    "refine": "refined",
    "tts": "refined",
    "eval": "evaluated",
}


def make_query(text: str) -> Query:
    """Deterministic query identity: id from the text hash, language by script."""
    qid = "q" + hashlib.sha256(text.strip().encode("utf-8")).hexdigest()[:12]
    language = "zh" if any("一" <= ch <= "鿿" for ch in text) else "en"
    return Query(text=text.strip(), id=qid, language=language)


def _feedback_text(verdict) -> str:
    if verdict is None:
        return ""
    parts = ["A previous plan was rejected by the verifier."]
    for issue in verdict.rule_issues:
        parts.append(f"- rule {issue.code}: {issue.message}")
    if verdict.review is not None:
        parts.append(f"Strengths: {verdict.review.strengths}")
        parts.append(f"Weaknesses: {verdict.review.weaknesses}")
        parts.append(f"Improvements: {verdict.review.improvements}")
    return "\n".join(parts)


def run_plan_stage(bundle, workspace: Workspace, query: Query) -> Plan:
    cfg = bundle.config
    budget = PlanningBudget(max_steps=cfg.budgets.planner_max_steps,
                            max_searches=cfg.budgets.planner_max_searches)
    runtime = ToolRuntime(bundle.adapters, workspace, scope="plan",
                          gateway=bundle.gateway, query_text=query.text,
                          search_k=cfg.budgets.search_k)
    holder: dict = {}

    def produce(round_no, last_verdict):
        plan, trajectory = run_planning(bundle.gateway, runtime, query, budget,
                                        feedback=_feedback_text(last_verdict))
        holder["trajectory"] = trajectory
        return plan

    def verify(plan):
        parsed = parse_plan(json.dumps(plan.to_dict(), ensure_ascii=False))
        return verify_plan(bundle.gateway, parsed, holder["trajectory"],
                           max_steps=budget.max_steps)

    def persist(verdict_dict, plan):
        workspace.write_verdict("plan", {
            "verdict": verdict_dict,
            "artifact": plan.to_dict(),
            "trajectory": [s.to_dict() for s in holder["trajectory"]],
        })

    plan, _ = revision_loop(produce, verify,
                            max_rounds=cfg.verify.max_rounds,
                            persist=persist, stage="plan")
    workspace.write_artifact("plan/plan.json", plan.to_dict())
    workspace.write_artifact("plan/trajectory.json",
                             [s.to_dict() for s in holder["trajectory"]])
    workspace.advance_stage("plan")
    return plan


def load_plan(workspace: Workspace) -> Plan:
    return Plan.from_dict(workspace.read_artifact("plan/plan.json"))


def run_research_stage(bundle, workspace: Workspace, query: Query, plan: Plan) -> dict:
    cfg = bundle.config
    budget = SectionBudget(max_steps=cfg.budgets.section_max_steps,
                           max_searches=cfg.budgets.section_max_searches)
    packages = run_research(bundle.gateway, bundle.adapters, workspace, query, plan,
                            budget=budget, fan_out=cfg.budgets.fan_out,
                            max_rounds=cfg.verify.max_rounds)
    workspace.advance_stage("research")
    return packages


def load_packages(workspace: Workspace, plan: Plan) -> dict:
    packages = {}
    for section in plan.sections:
        rel = f"research/{section.id}/package.json"
        if not workspace.has_artifact(rel):
            raise StageFailure("research", f"package missing for section {section.id}")
        packages[section.id] = ResearchPackage.from_dict(workspace.read_artifact(rel))
    return packages


def run_writing_stage(bundle, workspace: Workspace, query: Query, plan: Plan,
                      packages: dict) -> Report:
    vwm = VisualWorkingMemory.load(workspace)
    runtime = ToolRuntime(bundle.adapters, workspace, scope="plan",
                          gateway=bundle.gateway, query_text=query.text,
                          search_k=bundle.config.budgets.search_k)
    composed = []
    failures = []
    try:
        for section in plan.sections:
            package = packages[section.id]
            draft = compose_section(bundle.gateway, package,
                                    vwm.selected_for(section.id), section, query)
            workspace.write_artifact(f"report/drafts/{section.id}.json", draft.to_dict())
            blocks, section_failures = resolve_images(draft,
                                                      vwm.selected_for(section.id),
                                                      runtime)
            failures.extend(section_failures)
            composed.append(ComposedSection(section_id=section.id, draft=draft,
                                            blocks=blocks))
        conclusion_draft = compose_conclusion(bundle.gateway, plan, packages, query)
        workspace.write_artifact("report/drafts/conclusion.json", conclusion_draft.to_dict())
        conclusion_blocks, _ = resolve_images(conclusion_draft, [], runtime)
        conclusion = ComposedSection(section_id="conclusion", draft=conclusion_draft,
                                     blocks=conclusion_blocks)
        report = assemble_report(plan, composed, conclusion, packages,
                                 title=query.text, asset_store=workspace.assets)
    except StructuredOutputError as exc:
        raise StageFailure("writing", f"composition failed: {exc}") from exc
    workspace.write_artifact("report/raw_report.json", report.to_dict())
    workspace.write_artifact("report/resolution_failures.json", failures)
    workspace.advance_stage("writing")
    return report


def run_tts_stage(bundle, workspace: Workspace, screenshot: bool = True) -> dict:
    cfg = bundle.config
    runtime = ToolRuntime(bundle.adapters, workspace, scope="plan",
                          gateway=bundle.gateway)
    return run_tts(bundle.gateway, runtime, workspace,
                   screenshot=screenshot,
                   browser_cmd=cfg.render.browser_cmd,
                   viewport=cfg.render.viewport)


def run_eval_stage(bundle, workspace: Workspace, offline: bool = True,
                   skip_mpq: bool = False) -> dict:
    if not workspace.has_artifact("report/refined_report.json"):
        raise StageFailure("eval", "no refined report to evaluate")
    report = Report.from_dict(workspace.read_artifact("report/refined_report.json"))
    try:
        score_icq(bundle.gateway, report, workspace)
        viewport = workspace.root / "report" / "viewport.png"
        if not skip_mpq:
            score_mpq(bundle.gateway, viewport, workspace,
                      expected=bundle.config.render.viewport)
        judge = bundle.gateway if bundle.config.fact_judge else None
        fact_metrics(report, workspace, gateway=judge, offline=offline)
        summary = aggregate(workspace)
    except EvalError as exc:
        raise StageFailure("eval", str(exc)) from exc
    workspace.advance_stage("evaluated")
    return summary


def cmd_run(query_text: str, bundle, workspace: Workspace,
            until: str = "refine", screenshot: bool = True,
            offline: bool = True, skip_mpq: bool = False) -> None:
    """Full lifecycle with stage skipping for already-completed work."""
    target = UNTIL_STAGES.get(until)
    if target is None:
        raise StageFailure("plan", f"unknown --until stage {until!r}")
    from .workspace import STAGES

    target_idx = STAGES.index(target)
    query = workspace.query()

    if workspace.stage_index() < STAGES.index("plan"):
        run_plan_stage(bundle, workspace, query)
    if target_idx <= STAGES.index("plan"):
        return
    plan = load_plan(workspace)

    if workspace.stage_index() < STAGES.index("research"):
        run_research_stage(bundle, workspace, query, plan)
    if target_idx <= STAGES.index("research"):
        return

    if workspace.stage_index() < STAGES.index("writing"):
        packages = load_packages(workspace, plan)
        run_writing_stage(bundle, workspace, query, plan, packages)
    if target_idx <= STAGES.index("writing"):
        return

    if workspace.stage_index() < STAGES.index("refined"):
        run_tts_stage(bundle, workspace, screenshot=screenshot)
    if target_idx <= STAGES.index("refined"):
        return

    if workspace.stage_index() < STAGES.index("evaluated"):
        run_eval_stage(bundle, workspace, offline=offline, skip_mpq=skip_mpq)
