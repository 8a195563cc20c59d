"""Harness configuration: one YAML file plus environment-variable secrets.

Secrets never live in the file: keys that look like credentials must be
``*_env`` indirections naming an environment variable. ``${VAR}`` strings
anywhere in the file are interpolated from the environment at load time.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .clock import FixedClock, SystemClock
from .errors import ConfigError
from .gateway import ROLES, HttpBackend, ModelGateway, ScriptedBackend
from .tools import FixtureAdapters, LiveAdapters, MockChartRunner, SubprocessChartRunner

_ENV_RE = re.compile(r"\$\{([A-Z_][A-Z0-9_]*)\}")
_SECRET_KEY_RE = re.compile(r"(api_key|token|secret|password)$")


@dataclass
class Budgets:
    planner_max_steps: int = 12
    planner_max_searches: int = 8
    section_max_steps: int = 15
    section_max_searches: int = 6
    fan_out: int = 4
    search_k: int = 5


@dataclass
class VerifySettings:
    threshold_mean: float = 3.5
    threshold_floor: int = 3
    max_rounds: int = 3


@dataclass
class FilterSettings:
    min_dimension: int = 200
    max_aspect_ratio: float = 4.0


@dataclass
class RenderSettings:
    browser_cmd: str = ""
    viewport: tuple = (1000, 2000)


@dataclass
class HarnessConfig:
    mode: str = "mock"  # mock | live
    transcript: str = ""  # mock-mode response script
    fixtures: str = ""  # mock-mode web fixture directory
    roles: dict = field(default_factory=dict)  # live-mode backend settings per role
    tools: dict = field(default_factory=dict)  # live-mode tool endpoints
    budgets: Budgets = field(default_factory=Budgets)
    verify: VerifySettings = field(default_factory=VerifySettings)
    filter: FilterSettings = field(default_factory=FilterSettings)
    render: RenderSettings = field(default_factory=RenderSettings)
    max_inflight: int = 8
    fact_judge: bool = False
    base_dir: Path = field(default_factory=Path)

    def resolve(self, relpath: str) -> Path:
        p = Path(relpath)
        return p if p.is_absolute() else self.base_dir / p


def _interpolate(value):
    if isinstance(value, str):
        def sub(m):
            name = m.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} referenced but not set")
            return os.environ[name]

        return _ENV_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


def _reject_inline_secrets(value, path="") -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            where = f"{path}.{k}" if path else k
            if _SECRET_KEY_RE.search(k) and not k.endswith("_env"):
                raise ConfigError(
                    f"config key {where!r} looks like a secret; use {k}_env with an "
                    "environment variable name instead")
            _reject_inline_secrets(v, where)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _reject_inline_secrets(v, f"{path}[{i}]")


def load_config(path) -> HarnessConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _reject_inline_secrets(raw)
    raw = _interpolate(raw)

    cfg = HarnessConfig(base_dir=path.parent.resolve())
    cfg.mode = raw.get("mode", "mock")
    if cfg.mode not in ("mock", "live"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    cfg.transcript = raw.get("transcript", "")
    cfg.fixtures = raw.get("fixtures", "")
    cfg.roles = raw.get("gateway", {}).get("roles", {})
    cfg.max_inflight = int(raw.get("gateway", {}).get("max_inflight", 8))
    cfg.tools = raw.get("tools", {})
    for section, target in (("budgets", cfg.budgets), ("verify", cfg.verify),
                            ("filter", cfg.filter)):
        for k, v in (raw.get(section) or {}).items():
            if not hasattr(target, k):
                raise ConfigError(f"unknown {section} setting {k!r}")
            setattr(target, k, v)
    render_raw = raw.get("render") or {}
    cfg.render.browser_cmd = render_raw.get("browser_cmd", "")
    if "viewport" in render_raw:
        vp = render_raw["viewport"]
        if not (isinstance(vp, list) and len(vp) == 2):
            raise ConfigError("render.viewport must be [width, height]")
        cfg.render.viewport = (int(vp[0]), int(vp[1]))
    cfg.fact_judge = bool(raw.get("eval", {}).get("fact_judge", False))

    # Referenced files must exist before any work starts.
    missing = []
    if cfg.mode == "mock":
        if not cfg.transcript:
            missing.append("transcript (required in mock mode)")
        elif not cfg.resolve(cfg.transcript).exists():
            missing.append(f"transcript: {cfg.transcript}")
        if cfg.fixtures and not cfg.resolve(cfg.fixtures).exists():
            missing.append(f"fixtures: {cfg.fixtures}")
    if missing:
        raise ConfigError("missing referenced files: " + "; ".join(missing))
    return cfg


@dataclass
class RuntimeBundle:
    gateway: object
    adapters: object
    clock: object
    config: HarnessConfig


def _chart_runner(cfg: HarnessConfig):
    command = (cfg.tools or {}).get("chart_runner", "mock")
    if command == "mock":
        return MockChartRunner()
    if not command:
        return None
    return SubprocessChartRunner(command)


def build_runtime(cfg: HarnessConfig, workspace) -> RuntimeBundle:
    """Wire backends, adapters, and the clock for one run."""
    import json

    def log_sink(record):
        workspace.append_log("gateway", record)

    if cfg.mode == "mock":
        clock = FixedClock()
        workspace.clock = clock
        transcript = json.loads(cfg.resolve(cfg.transcript).read_text(encoding="utf-8"))
        backend = ScriptedBackend.from_transcript(transcript)
        backends = {role: backend for role in ROLES}
        gateway = ModelGateway(backends, log_sink=log_sink, clock=clock,
                               max_inflight=cfg.max_inflight)
        if not cfg.fixtures:
            raise ConfigError("mock mode needs a fixtures directory for tool adapters")
        adapters = FixtureAdapters(cfg.resolve(cfg.fixtures), chart_runner=_chart_runner(cfg))
        return RuntimeBundle(gateway=gateway, adapters=adapters, clock=clock, config=cfg)

    clock = SystemClock()
    workspace.clock = clock

    def asset_resolver(ref):
        p = Path(ref)
        if p.exists():
            data = p.read_bytes()
        else:
            data = workspace.assets.read(ref)
        from .workspace import sniff_image_format

        fmt = sniff_image_format(data) or "png"
        return data, f"image/{fmt}"

    backends = {}
    for role in ROLES:
        spec = cfg.roles.get(role)
        if spec is None:
            raise ConfigError(f"live mode needs gateway.roles.{role}")
        api_key = os.environ.get(spec.get("api_key_env", ""), "")
        backends[role] = HttpBackend(
            endpoint=spec["endpoint"], model=spec.get("model", ""),
            api_key=api_key, vision=bool(spec.get("vision", False)),
            asset_resolver=asset_resolver)
    gateway = ModelGateway(backends, log_sink=log_sink, clock=clock,
                           max_inflight=cfg.max_inflight)
    tools = cfg.tools or {}
    adapters = LiveAdapters(
        search_endpoint=tools.get("search_endpoint", ""),
        search_api_key=os.environ.get(tools.get("search_api_key_env", ""), ""),
        image_search_endpoint=tools.get("image_search_endpoint", ""),
        reader_endpoint=tools.get("reader_endpoint", ""),
        generate_endpoint=tools.get("generate_endpoint", ""),
        edit_endpoint=tools.get("edit_endpoint", ""),
        chart_runner=_chart_runner(cfg))
    return RuntimeBundle(gateway=gateway, adapters=adapters, clock=clock, config=cfg)
