"""Fixed thought/tool-call step grammar for the agent loops.

A well-formed step is either

    Thought: <free text>
    Action: <one-line JSON {"tool": ..., "args": {...}}>

or

    Thought: <free text>
    Final: <JSON payload of the stage artifact>

Malformed steps are not retried silently; they are recorded and become
protocol-grammar rule violations for the verifier.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

_THOUGHT_RE = re.compile(r"^\s*Thought:\s*(.*?)\s*(?=^(?:Action|Final):|\Z)", re.S | re.M)
_ACTION_RE = re.compile(r"^Action:\s*(.*)\s*\Z", re.S | re.M)
_FINAL_RE = re.compile(r"^Final:\s*(.*)\s*\Z", re.S | re.M)


@dataclass
class ReactStep:
    thought: str = ""
    action: Optional[dict] = None  # {"tool": ..., "args": {...}}
    final: Optional[str] = None  # raw JSON text of the stage artifact
    errors: list = field(default_factory=list)

    @property
    def malformed(self) -> bool:
        return bool(self.errors)


def parse_react(text: str) -> ReactStep:
    step = ReactStep()
    m = _THOUGHT_RE.search(text)
    if not m:
        step.errors.append("missing 'Thought:' line")
        step.thought = text.strip()
    else:
        step.thought = m.group(1).strip()

    action_m = _ACTION_RE.search(text)
    final_m = _FINAL_RE.search(text)
    if action_m and final_m:
        step.errors.append("step contains both 'Action:' and 'Final:'")
        return step
    if not action_m and not final_m:
        step.errors.append("step contains neither 'Action:' nor 'Final:'")
        return step
    if action_m:
        raw = action_m.group(1).strip()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError as exc:
            step.errors.append(f"Action JSON invalid: {exc}")
            return step
        if not isinstance(value, dict) or "tool" not in value:
            step.errors.append("Action JSON must be an object with a 'tool' field")
            return step
        value.setdefault("args", {})
        if not isinstance(value["args"], dict):
            step.errors.append("Action 'args' must be an object")
            return step
        step.action = value
    else:
        step.final = final_m.group(1).strip()
    return step


def format_action_step(thought: str, tool: str, args: dict) -> str:
    """Inverse of parse_react for fixtures and prompts."""
    return f"Thought: {thought}\nAction: " + json.dumps({"tool": tool, "args": args}, ensure_ascii=False)


def format_final_step(thought: str, payload) -> str:
    return f"Thought: {thought}\nFinal: " + json.dumps(payload, ensure_ascii=False)
