"""The acceptance function gating every stage transition.

Each stage boundary gets (1) deterministic rule checks and (2) a rubric
scored by a judge model, combined into a VerifierVerdict. Fatal rule
issues force rejection and skip the judge; if the judge is unreachable
the verdict degrades to rules-only and says so.

Acceptance threshold: rubric mean >= 3.5 AND no dimension below 3.

Rule severities: a fatal issue always blocks. Warnings block nothing;
when the artifact is otherwise accepted they are folded into the review
text (an accepting verdict never carries rule issues), and on rejection
they ride along in ``rule_issues`` for the producer to see.

Rule codes are documented in docs/rule-codes.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    JudgeUnavailableError,
    MissingFixtureError,
    StageFailure,
    StructuredOutputError,
    TransportError,
)
from .gateway import DecodeParams, Message, ModelRequest
from .models import Review, RubricScore, RuleIssue, VerifierVerdict
from .prompts import load_prompt
from .react import parse_react
from .tools.base import TOOL_SCHEMAS
from .urls import canonical_url

THRESHOLD_MEAN = 3.5
THRESHOLD_FLOOR = 3
MAX_ROUNDS = 3


@dataclass(frozen=True)
class RuleCheck:
    code: str
    stage: str  # plan | package | writing
    severity: str  # fatal | warning


@dataclass(frozen=True)
class Rubric:
    stage: str
    dimensions: tuple  # tuple[(name, guidance), ...]
    threshold_mean: float = THRESHOLD_MEAN
    threshold_floor: int = THRESHOLD_FLOOR

    def __post_init__(self):
        if not self.dimensions:
            raise ValueError("rubric needs at least one dimension")

    def accepts(self, score: RubricScore) -> bool:
        return score.mean() >= self.threshold_mean and score.minimum() >= self.threshold_floor


PLAN_RUBRIC = Rubric(stage="plan", dimensions=(
    ("query_coverage", "the plan covers every aspect of the research query"),
    ("section_coherence", "sections are distinct, ordered sensibly, and jointly complete"),
    ("visual_argument_relevance", "visual specifications genuinely support the argument"),
))

PACKAGE_RUBRIC = Rubric(stage="package", dimensions=(
    ("claim_support", "claims are backed by quoted evidence from the sources"),
    ("goal_coverage", "the planned section goals are all addressed"),
    ("consistency", "numbers and references agree with the retrieved content"),
    ("visual_relevance", "collected visual candidates fit the section intent"),
))


# ---------------------------------------------------------------------------
# Rubric evaluation via judge model
# ---------------------------------------------------------------------------


def _score_schema(dimensions: tuple) -> dict:
    return {
        "type": "object",
        "properties": {
            "scores": {
                "type": "object",
                "properties": {name: {"type": "integer", "minimum": 1, "maximum": 5}
                               for name, _ in dimensions},
                "required": [name for name, _ in dimensions],
                "additionalProperties": False,
            },
            "strengths": {"type": "string", "minLength": 1},
            "weaknesses": {"type": "string", "minLength": 1},
            "improvements": {"type": "string", "minLength": 1},
        },
        "required": ["scores", "strengths", "weaknesses", "improvements"],
        "additionalProperties": False,
    }


def rubric_evaluate(gateway, artifact_text: str, context: str, rubric: Rubric,
                    role_hint: str = "verifier"):
    """Run the judge over an artifact. Returns (RubricScore, Review).

    Raises JudgeUnavailableError when the backend cannot be reached and
    StructuredOutputError when the judge cannot produce valid scores.
    """
    template = load_prompt("rubric")
    dims_text = "\n".join(f"- {name}: {guidance}" for name, guidance in rubric.dimensions)
    score_keys = ", ".join(f'"{name}": <1-5>' for name, _ in rubric.dimensions)
    prompt = template.format(stage=rubric.stage, dimensions=dims_text,
                             context=context, artifact=artifact_text,
                             score_keys=score_keys)
    request = ModelRequest(role_hint=role_hint,
                           messages=(Message("user", prompt),),
                           decode=DecodeParams(temperature=0.0))
    try:
        value = gateway.complete_structured(request, _score_schema(rubric.dimensions))
    except (TransportError, MissingFixtureError) as exc:
        raise JudgeUnavailableError(str(exc)) from exc
    ordered = {name: value["scores"][name] for name, _ in rubric.dimensions}
    score = RubricScore.from_mapping(ordered)
    review = Review(strengths=value["strengths"], weaknesses=value["weaknesses"],
                    improvements=value["improvements"])
    return score, review


# ---------------------------------------------------------------------------
# Rule layers
# ---------------------------------------------------------------------------


def check_trajectory_protocol(trajectory_texts: list) -> list:
    """Protocol-grammar check over raw step texts (when available)."""
    issues = []
    for i, text in enumerate(trajectory_texts):
        step = parse_react(text)
        if step.malformed:
            issues.append(RuleIssue("protocol-grammar", "; ".join(step.errors), f"step {i + 1}"))
    return issues


def check_tool_calls(trajectory: list) -> list:
    import jsonschema

    issues = []
    for step in trajectory:
        if step.action is None:
            continue
        tool = step.action.tool
        if tool not in TOOL_SCHEMAS:
            issues.append(RuleIssue("tool-schema", f"unknown tool {tool!r}", f"step {step.index}"))
            continue
        validator = jsonschema.Draft202012Validator(TOOL_SCHEMAS[tool])
        for err in validator.iter_errors(step.action.args):
            issues.append(RuleIssue("tool-schema", f"{tool}: {err.message}", f"step {step.index}"))
    return issues


def check_budget(trajectory: list, max_steps: int) -> list:
    if len(trajectory) > max_steps:
        return [RuleIssue("budget", f"trajectory has {len(trajectory)} steps, budget {max_steps}")]
    return []


def check_plan_grounding(trajectory: list) -> list:
    if not any(s.action is not None and s.action.tool == "text_search" for s in trajectory):
        return [RuleIssue("plan-grounding", "plan produced without any text search")]
    return []


_NUM_SEP_RE = re.compile(r"(?<=\d),(?=\d{3}\b)")


def normalize_numeric_text(text: str) -> str:
    """Casefold and strip thousands separators for exact-match numeric checks."""
    return _NUM_SEP_RE.sub("", text).casefold()


def check_citation_membership(urls: list, ledger_urls: set) -> list:
    """Flag exactly the citation URLs whose canonical form is off-ledger."""
    issues = []
    canon_ledger = set(ledger_urls)
    for url in urls:
        try:
            canon = canonical_url(url)
        except ValueError:
            issues.append(RuleIssue("cite-membership", f"citation URL invalid: {url!r}", url))
            continue
        if canon not in canon_ledger:
            issues.append(RuleIssue("cite-membership",
                                    f"citation {url} was never retrieved in this scope", url))
    return issues


def check_numeric_consistency(package, pages_by_url: dict) -> list:
    """Every numeric fact must appear (post-normalization) in its cited page.

    Unit adjacency is only advisory: the bare value missing is fatal, the
    unit not sitting next to it is a warning surfaced through the review.
    """
    issues = []
    citations = {c.id: c for c in package.references}
    for fact in package.numeric_facts:
        cit = citations.get(fact.source)
        if cit is None:
            continue  # resolution handled by check_package_resolution
        try:
            key = canonical_url(cit.url)
        except ValueError:
            continue
        page = pages_by_url.get(key)
        if page is None:
            issues.append(RuleIssue("num-consistency",
                                    f"no stored page for {cit.url} to support fact {fact.name!r}",
                                    fact.name))
            continue
        haystack = normalize_numeric_text(page.get("markdown", ""))
        value = normalize_numeric_text(fact.value)
        if value not in haystack:
            issues.append(RuleIssue("num-consistency",
                                    f"value {fact.value!r} for {fact.name!r} not found in {cit.url}",
                                    fact.name))
    return issues


def check_package_resolution(package) -> list:
    issues = []
    ids = {c.id for c in package.references}
    for i, ev in enumerate(package.evidence):
        if ev.citation_id not in ids:
            issues.append(RuleIssue("cite-resolve",
                                    f"evidence {i} cites unknown id {ev.citation_id!r}",
                                    f"evidence/{i}"))
    for fact in package.numeric_facts:
        if fact.source not in ids:
            issues.append(RuleIssue("cite-resolve",
                                    f"numeric fact {fact.name!r} cites unknown id {fact.source!r}",
                                    fact.name))
    return issues


# ---------------------------------------------------------------------------
# Verdict builders
# ---------------------------------------------------------------------------


def _finish_verdict(stage: str, fatal: list, warnings: list, gateway, artifact_text: str,
                    context: str, rubric: Rubric) -> VerifierVerdict:
    if fatal:
        return VerifierVerdict(stage=stage, rule_issues=fatal + warnings, decision="reject")
    try:
        score, review = rubric_evaluate(gateway, artifact_text, context, rubric)
    except JudgeUnavailableError:
        # Degraded mode: rules-only decision, never overriding a rule reject.
        if warnings:
            return VerifierVerdict(stage=stage, rule_issues=warnings,
                                   decision="reject", degraded=True)
        return VerifierVerdict(stage=stage, decision="accept", degraded=True)
    accepted = rubric.accepts(score)
    if accepted:
        if warnings:
            noted = "; ".join(f"{w.code}: {w.message}" for w in warnings)
            review = Review(strengths=review.strengths,
                            weaknesses=(review.weaknesses + " Noted: " + noted).strip(),
                            improvements=review.improvements)
        return VerifierVerdict(stage=stage, rubric=score, decision="accept", review=review)
    return VerifierVerdict(stage=stage, rule_issues=warnings, rubric=score,
                           decision="reject", review=review)


def verify_plan(gateway, parsed_plan, trajectory, max_steps: int,
                raw_step_texts: Optional[list] = None) -> VerifierVerdict:
    """Format, protocol, tool-schema, budget and grounding rules, then rubric."""
    fatal: list = []
    warnings: list = []
    for v in parsed_plan.violations:
        fatal.append(RuleIssue("plan-format", f"{v.code}: {v.message}", v.location))
    if raw_step_texts:
        fatal.extend(check_trajectory_protocol(raw_step_texts))
    fatal.extend(check_tool_calls(trajectory))
    fatal.extend(check_budget(trajectory, max_steps))
    fatal.extend(check_plan_grounding(trajectory))

    plan_text = ""
    context = f"{len(trajectory)} trajectory steps"
    if parsed_plan.plan is not None:
        from .models import canonical_json

        plan_text = canonical_json(parsed_plan.plan.to_dict())
        search_count = sum(1 for s in trajectory
                           if s.action is not None and s.action.tool == "text_search")
        context = (f"The planner took {len(trajectory)} steps including "
                   f"{search_count} searches.")
    return _finish_verdict("plan", fatal, warnings, gateway, plan_text, context, PLAN_RUBRIC)


def verify_package(gateway, package, section, ledger_urls: set,
                   pages_by_url: dict) -> VerifierVerdict:
    """Citation membership, resolution, numeric consistency, then rubric."""
    fatal: list = []
    warnings: list = []
    fatal.extend(check_citation_membership([c.url for c in package.references], ledger_urls))
    fatal.extend(check_package_resolution(package))
    fatal.extend(check_numeric_consistency(package, pages_by_url))
    if section.goals and not package.evidence:
        warnings.append(RuleIssue("goal-coverage",
                                  f"section {section.id} has goals but the package carries no evidence"))

    from .models import canonical_json

    package_text = canonical_json(package.to_dict())
    context = (f"Section {section.id} ({section.title}). Goals: "
               + "; ".join(section.goals))
    return _finish_verdict("package", fatal, warnings, gateway, package_text,
                           context, PACKAGE_RUBRIC)


# ---------------------------------------------------------------------------
# Revision loop
# ---------------------------------------------------------------------------


def revision_loop(produce: Callable, verify: Callable, max_rounds: int = MAX_ROUNDS,
                  persist: Optional[Callable] = None, stage: str = "plan"):
    """accept-or-revise driver shared by all stages.

    ``produce(round_no, last_verdict)`` builds an artifact (seeing the full
    previous review); ``verify(artifact)`` returns a VerifierVerdict;
    ``persist(verdict_dict, artifact)`` is called for every verdict in
    order, so rejected attempts stay inspectable on disk. Returns
    (artifact, verdicts) on first acceptance.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    verdicts = []
    last: Optional[VerifierVerdict] = None
    artifact = None
    for round_no in range(1, max_rounds + 1):
        try:
            artifact = produce(round_no, last)
        except StructuredOutputError as exc:
            raise StageFailure(stage, f"producer failed: {exc}") from exc
        verdict = verify(artifact)
        verdicts.append(verdict)
        if persist is not None:
            persist(verdict.to_dict(), artifact)
        if verdict.decision == "accept":
            return artifact, verdicts
        last = verdict
    raise StageFailure(stage, f"no accepted artifact after {max_rounds} rounds",
                       verdict=verdicts[-1] if verdicts else None)
