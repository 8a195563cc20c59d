"""Workspace layout, stage ladder, asset store, ledgers, verdict numbering."""

import pytest

from ptah.clock import FixedClock
from ptah.errors import StageRegressionError, WorkspaceError
from ptah.models import Query
from ptah.urls import canonical_url
from ptah.workspace import STAGES, Workspace, sniff_image_format

from conftest import png_bytes


def test_init_creates_layout(workspace):
    for sub in ("plan", "research", "vwm/images", "report", "eval", "logs"):
        assert (workspace.root / sub).is_dir()
    assert workspace.has_artifact("query.json")
    assert workspace.stage == "created"


def test_init_refuses_nonempty_without_resume(tmp_path, query):
    Workspace.init(query, tmp_path / "ws")
    with pytest.raises(WorkspaceError, match="resume"):
        Workspace.init(query, tmp_path / "ws")


def test_resume_points_at_latest_stage(tmp_path, query):
    ws = Workspace.init(query, tmp_path / "ws")
    ws.advance_stage("plan")
    ws.advance_stage("research")
    again = Workspace.init(query, tmp_path / "ws", resume=True)
    assert again.stage == "research"
    assert again.query() == query


def test_resume_rejects_other_query(tmp_path, query):
    Workspace.init(query, tmp_path / "ws")
    other = Query(text="something else", id="q-other")
    with pytest.raises(WorkspaceError, match="different query"):
        Workspace.init(other, tmp_path / "ws", resume=True)


def test_stage_marker_monotonic(workspace):
    workspace.advance_stage("plan")
    workspace.advance_stage("writing")
    with pytest.raises(StageRegressionError):
        workspace.advance_stage("plan")
    assert workspace.stage == "writing"
    # re-asserting the current stage is allowed (no-op)
    workspace.advance_stage("writing")


def test_stage_ladder_embeds_lifecycle_chain():
    core = ["plan", "research", "writing", "refined", "evaluated"]
    indices = [STAGES.index(s) for s in core]
    assert indices == sorted(indices)


def test_asset_store_content_addressed(workspace):
    import hashlib

    data = png_bytes(64, 64)
    asset_id = workspace.assets.store(data, meta={"provenance": "test"})
    assert asset_id == hashlib.sha256(data).hexdigest()
    assert workspace.assets.has_asset(asset_id)
    path = workspace.assets.find(asset_id)
    assert path.name == f"{asset_id}.png"
    assert hashlib.sha256(path.read_bytes()).hexdigest() == asset_id
    # duplicate store is a no-op returning the same id
    assert workspace.assets.store(data) == asset_id


def test_asset_lineage_chain(workspace):
    a = workspace.assets.store(png_bytes(64, 64, (1, 2, 3)))
    b = workspace.assets.store(png_bytes(64, 64, (4, 5, 6)),
                               meta={"parent": a, "instruction": "brighten"})
    c = workspace.assets.store(png_bytes(64, 64, (7, 8, 9)),
                               meta={"parent": b, "instruction": "crop"})
    chain = workspace.assets.lineage(c)
    assert [link["parent"] for link in chain] == [b, a]


def test_sniff_image_formats():
    assert sniff_image_format(png_bytes(4, 4)) == "png"
    assert sniff_image_format(b"GIF89a....") == "gif"
    assert sniff_image_format(b"<svg xmlns='x'></svg>") == "svg"
    assert sniff_image_format(b"\x00\x01randomness") is None


def test_ledger_canonicalizes_and_dedups(workspace):
    ledger = workspace.ledger("sec-a")
    ledger.add("https://Example.com/a/")
    ledger.add("https://example.com/a#frag")
    assert ledger.urls() == [canonical_url("https://example.com/a")]
    assert ledger.contains("https://EXAMPLE.com/a/")
    assert not ledger.contains("https://example.com/b")


def test_union_ledger(workspace):
    workspace.ledger("plan").add("https://e.test/p")
    workspace.ledger("s1").add("https://e.test/a")
    workspace.ledger("s2").add("https://e.test/b")
    assert workspace.union_ledger_urls() == {
        canonical_url("https://e.test/p"),
        canonical_url("https://e.test/a"),
        canonical_url("https://e.test/b"),
    }


def test_verdicts_numbered_consecutively(workspace):
    for i in range(3):
        path = workspace.write_verdict("plan", {"round": i + 1})
    names = sorted(p.name for p in (workspace.root / "plan" / "verdicts").glob("*.json"))
    assert names == ["01.json", "02.json", "03.json"]
    assert [v["round"] for v in workspace.verdicts("plan")] == [1, 2, 3]
    assert path.name == "03.json"


def test_page_store_round_trip(workspace):
    pages = workspace.pages("s1")
    pages.put("https://e.test/a", {"url": "https://e.test/a", "markdown": "# hi"})
    assert pages.get("https://e.test/a/")["markdown"] == "# hi"
    assert pages.get("https://e.test/other") is None
    assert len(pages.all_pages()) == 1


def test_lock_exclusive(workspace):
    workspace.acquire_lock()
    with pytest.raises(WorkspaceError, match="locked"):
        workspace.acquire_lock()
    workspace.release_lock()
    workspace.acquire_lock()
    workspace.release_lock()


def test_logs_append_and_read(workspace):
    workspace.append_log("gateway", {"event": "request", "hash": "abc"})
    workspace.append_log("gateway", {"event": "response", "hash": "abc"})
    records = workspace.read_log("gateway")
    assert [r["event"] for r in records] == ["request", "response"]
