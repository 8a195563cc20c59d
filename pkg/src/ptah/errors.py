"""Exception hierarchy shared across the harness.

Stage failures carry the stage name so the CLI can map them to stable
exit codes. Everything else subclasses PtahError so callers can catch
harness errors without swallowing programming bugs.
"""

from __future__ import annotations


class PtahError(Exception):
    """Base class for all harness errors."""


class ConfigError(PtahError):
    """Invalid or incomplete configuration."""


class IntegrityError(PtahError):
    """A persisted artifact references something that does not exist."""


class WorkspaceError(PtahError):
    """Workspace layout or locking problem."""


class StageRegressionError(WorkspaceError):
    """Attempt to move the workspace stage marker backwards."""


class CapabilityError(PtahError):
    """Request needs a capability the configured backend lacks."""


class TransportError(PtahError):
    """Retryable network-level failure talking to a remote service."""


class MissingFixtureError(PtahError):
    """Replay/scripted backend has no response for a request (strict mode)."""


class StructuredOutputError(PtahError):
    """Model output failed schema validation after all repair rounds."""

    def __init__(self, message: str, attempts: list | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class JudgeUnavailableError(PtahError):
    """Rubric judge backend cannot be reached; rule-only degraded mode applies."""


class ProtocolViolation(PtahError):
    """Tool call broke the tool protocol (unknown tool, bad args)."""

    def __init__(self, message: str, code: str = "protocol"):
        super().__init__(message)
        self.code = code


class ToolError(PtahError):
    """A tool adapter failed while executing a valid call."""


class GenerationError(ToolError):
    """Image generation backend failed."""


class EditError(ToolError):
    """Image edit backend failed."""


class ChartExecError(ToolError):
    """Chart script execution failed."""

    def __init__(self, message: str, stderr_tail: str = ""):
        super().__init__(message)
        self.stderr_tail = stderr_tail


class ChartTimeoutError(ChartExecError):
    """Chart script exceeded its wall-clock budget."""


class DirectiveParseError(PtahError):
    """Malformed image directive tag in writer output."""

    def __init__(self, code: str, message: str, offset: int, line: int, column: int):
        super().__init__(f"{code} at line {line}, column {column}: {message}")
        self.code = code
        self.offset = offset
        self.line = line
        self.column = column


class AssemblyError(PtahError):
    """Report assembly failed validation."""


class RenderError(PtahError):
    """Headless browser render/screenshot failed."""


class EvalError(PtahError):
    """Evaluation step failed (no partial mode available)."""


class StageFailure(PtahError):
    """A lifecycle stage could not produce an accepted artifact.

    ``stage`` is one of plan/research/writing/tts/eval and maps to the
    CLI exit-code contract.
    """

    def __init__(self, stage: str, message: str, verdict=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.verdict = verdict


EXIT_CODES = {
    "ok": 0,
    "config": 2,
    "plan": 3,
    "research": 4,
    "writing": 5,
    "tts": 6,
    "eval": 7,
}
