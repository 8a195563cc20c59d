"""Shared fixtures: throwaway workspaces, scripted gateways, web fixtures."""

from __future__ import annotations

import io
import json
from pathlib import Path

import pytest
from PIL import Image

from ptah.clock import FixedClock
from ptah.gateway import ModelGateway, ScriptedBackend, ScriptRoute
from ptah.models import Query
from ptah.tools import FixtureAdapters, MockChartRunner
from ptah.workspace import Workspace

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


def png_bytes(width: int, height: int, color=(30, 90, 160)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def query() -> Query:
    return Query(text="Solar adoption trends in rural microgrids", id="q-test", language="en")


@pytest.fixture
def workspace(tmp_path, query) -> Workspace:
    return Workspace.init(query, tmp_path / "ws", clock=FixedClock())


def scripted_gateway(routes, workspace=None, **kw):
    """Gateway over an in-memory script; routes = [(role, contains, [responses])]."""
    backend = ScriptedBackend([ScriptRoute(role=r, contains=c, script=list(s))
                               for r, c, s in routes])
    log_sink = None
    if workspace is not None:
        log_sink = lambda rec: workspace.append_log("gateway", rec)  # noqa: E731
    return ModelGateway({role: backend for role in
                         ("planner", "researcher", "writer", "verifier", "selector", "judge")},
                        log_sink=log_sink, clock=FixedClock(), **kw)


def rubric_response(scores: dict, strengths="solid work", weaknesses="minor gaps",
                    improvements="tighten sourcing") -> str:
    return json.dumps({"scores": scores, "strengths": strengths,
                       "weaknesses": weaknesses, "improvements": improvements})


@pytest.fixture
def web_fixture_dir(tmp_path) -> Path:
    """Small self-contained web fixture tree for tool tests."""
    root = tmp_path / "web"
    (root / "pages").mkdir(parents=True)
    (root / "images").mkdir()

    (root / "images" / "big.png").write_bytes(png_bytes(800, 500, (10, 40, 90)))
    (root / "images" / "icon.png").write_bytes(png_bytes(64, 64, (200, 30, 30)))
    (root / "images" / "photo.png").write_bytes(png_bytes(640, 480, (20, 120, 60)))

    (root / "pages" / "a.html").write_text(
        "<html><head><title>Alpha</title></head><body>"
        "<h1>Alpha report</h1><p>Adoption reached 42.5 % in 2024.</p>"
        '<img src="/img/big.png" alt="trend chart">'
        '<p>Installed capacity hit 1,200 MW.</p>'
        '<img src="https://fixture.test/img/icon.png" alt="icon">'
        '<img src="/img/missing.png" alt="gone">'
        "</body></html>", encoding="utf-8")
    (root / "pages" / "b.html").write_text(
        "<html><body><h2>Beta study</h2><p>No images here, just text about "
        "microgrids and storage.</p></body></html>", encoding="utf-8")

    index = {
        "search": {
            "microgrid adoption": [
                {"url": "https://fixture.test/a", "title": "Alpha", "snippet": "adoption stats"},
                {"url": "https://fixture.test/b", "title": "Beta", "snippet": "storage study"},
            ],
        },
        "image_search": {
            "aerial photo": [
                {"url": "https://fixture.test/img/photo.png", "title": "Aerial"},
            ],
            "empty query": [],
        },
        "pages": {
            "https://fixture.test/a": "pages/a.html",
            "https://fixture.test/b": "pages/b.html",
        },
        "files": {
            "https://fixture.test/img/big.png": "images/big.png",
            "https://fixture.test/img/icon.png": "images/icon.png",
            "https://fixture.test/img/photo.png": "images/photo.png",
        },
    }
    (root / "index.json").write_text(json.dumps(index, indent=2), encoding="utf-8")
    return root


@pytest.fixture
def adapters(web_fixture_dir) -> FixtureAdapters:
    return FixtureAdapters(web_fixture_dir, chart_runner=MockChartRunner())
