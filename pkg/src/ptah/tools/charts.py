"""Chart execution: JSON-over-stdio client for the sandboxed runner, plus a mock.

One job per runner process. The runner command gets a single SandboxJob
line on stdin and must answer with a single SandboxResult line:

    {"script": ..., "data": ..., "timeout_s": 30, "output_format": "png",
     "max_pixels": [4096, 4096]}
    {"status": "ok"|"error"|"timeout", "image_base64": ..., "stderr_tail": ...,
     "wall_ms": ...}
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess

from ..errors import ChartExecError, ChartTimeoutError, ConfigError
from .adapters import deterministic_png

DEFAULT_TIMEOUT_S = 30.0
MAX_PIXELS = (4096, 4096)


class MockChartRunner:
    """Deterministic stand-in so the whole pipeline tests without the sandbox.

    Scripts containing "FAIL" simulate execution errors; "SLEEP" simulates a
    timeout.
    """

    def run(self, script: str, data, timeout_s: float = DEFAULT_TIMEOUT_S) -> bytes:
        if "FAIL" in script:
            raise ChartExecError("simulated chart failure", stderr_tail="boom")
        if "SLEEP" in script:
            raise ChartTimeoutError(f"simulated timeout after {timeout_s}s")
        seed = json.dumps({"script": script, "data": data}, sort_keys=True)
        return deterministic_png("chart:" + seed, size=(640, 480))


class SubprocessChartRunner:
    """Spawns the external runner per job and speaks the line protocol."""

    def __init__(self, command: str):
        self.command = command

    def run(self, script: str, data, timeout_s: float = DEFAULT_TIMEOUT_S) -> bytes:
        job = {
            "script": script,
            "data": data,
            "timeout_s": timeout_s,
            "output_format": "png",
            "max_pixels": list(MAX_PIXELS),
        }
        argv = shlex.split(self.command)
        try:
            proc = subprocess.run(
                argv,
                input=json.dumps(job) + "\n",
                capture_output=True,
                text=True,
                timeout=timeout_s + 10.0,  # runner enforces the job timeout itself
            )
        except FileNotFoundError as exc:
            raise ConfigError(f"chart runner command not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ChartTimeoutError(f"chart runner unresponsive after {timeout_s}s") from exc
        if proc.returncode != 0:
            raise ChartExecError(
                f"chart runner exited {proc.returncode}", stderr_tail=proc.stderr[-2000:]
            )
        line = proc.stdout.strip().splitlines()
        if not line:
            raise ChartExecError("chart runner produced no result line")
        try:
            result = json.loads(line[-1])
        except json.JSONDecodeError as exc:
            raise ChartExecError(f"chart runner result not JSON: {exc}") from exc
        status = result.get("status")
        if status == "timeout":
            raise ChartTimeoutError(f"chart script timed out: {result.get('stderr_tail', '')}")
        if status != "ok":
            raise ChartExecError("chart script failed", stderr_tail=result.get("stderr_tail", ""))
        try:
            return base64.b64decode(result["image_base64"])
        except (KeyError, ValueError) as exc:
            raise ChartExecError(f"chart result missing image: {exc}") from exc
