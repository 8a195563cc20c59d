"""Tool suite: search, page reading, image ops, charts, dispatch protocol."""

import hashlib

import pytest

from ptah.errors import (
    ChartExecError,
    ChartTimeoutError,
    ConfigError,
    GenerationError,
    IntegrityError,
    ProtocolViolation,
)
from ptah.models import ToolCall
from ptah.tools import MockChartRunner, html_to_markdown
from ptah.tools.base import ToolRuntime
from ptah.urls import canonical_url

from conftest import scripted_gateway


@pytest.fixture
def runtime(adapters, workspace):
    gw = scripted_gateway([
        ("researcher", "Summarize the following page", ["page summary"] * 10),
    ])
    return ToolRuntime(adapters, workspace, scope="s1", gateway=gw,
                       query_text="microgrids")


def test_html_to_markdown_extracts_images_in_order():
    html = ('<html><body><h1>Title</h1><p>One</p>'
            '<img src="/a.png" alt="A"><p>Two</p>'
            '<img src="https://x.test/b.png"><img src="c.png"></body></html>')
    markdown, images = html_to_markdown(html, base_url="https://x.test/page/")
    assert images == ["https://x.test/a.png", "https://x.test/b.png",
                      "https://x.test/page/c.png"]
    assert "# Title" in markdown and "One" in markdown


def test_fetch_page_collects_images_and_ledger(runtime):
    page = runtime.fetch_page("https://fixture.test/a")
    assert not page.degraded
    assert len(page.image_urls) == 3  # document order, including the dead one
    assert page.image_urls[0] == "https://fixture.test/img/big.png"
    assert "42.5" in page.markdown
    assert runtime.ledger.contains("https://fixture.test/a")
    assert runtime.page_store.get("https://fixture.test/a") is not None


def test_fetch_page_zero_images(runtime):
    page = runtime.fetch_page("https://fixture.test/b")
    assert page.image_urls == ()


def test_fetch_page_degraded_on_unreachable(runtime):
    page = runtime.fetch_page("https://fixture.test/nope")
    assert page.degraded and page.markdown == ""
    assert not runtime.ledger.contains("https://fixture.test/nope")


def test_fetch_page_invalid_url(runtime):
    with pytest.raises(ValueError):
        runtime.fetch_page("not-a-url")


def test_text_search_fetches_and_summarizes(runtime):
    results = runtime.text_search("microgrid adoption", k=5)
    assert [r.rank for r in results] == [1, 2]  # only 2 indexed pages
    assert all(r.summary == "page summary" for r in results)
    for r in results:
        assert runtime.ledger.contains(r.url)


def test_text_search_k_bounds(runtime):
    with pytest.raises(ValueError):
        runtime.text_search("microgrid adoption", k=0)
    assert runtime.text_search("nothing indexed", k=5) == []


def test_text_search_default_k_is_5(adapters, workspace):
    calls = []
    original = adapters.search

    def spy(query, k):
        calls.append(k)
        return original(query, k)

    adapters.search = spy
    runtime = ToolRuntime(adapters, workspace, scope="s1", gateway=None)
    runtime.text_search("microgrid adoption")
    assert calls == [5]


def test_image_search_stores_by_hash(runtime, web_fixture_dir):
    hits, warnings = runtime.image_search("aerial photo", k=3)
    assert len(hits) == 1 and warnings == []
    expected = hashlib.sha256((web_fixture_dir / "images" / "photo.png").read_bytes()).hexdigest()
    assert hits[0]["asset_id"] == expected
    assert runtime.workspace.assets.has_asset(expected)


def test_image_search_dedups_identical_bytes(runtime, web_fixture_dir, adapters):
    # two different URLs serving the same bytes -> one stored asset, two refs
    adapters.index["image_search"]["dup query"] = [
        {"url": "https://fixture.test/img/photo.png", "title": "one"},
        {"url": "https://fixture.test/img/photo2.png", "title": "two"},
    ]
    adapters.index["files"]["https://fixture.test/img/photo2.png"] = "images/photo.png"
    hits, _ = runtime.image_search("dup query", k=2)
    assert len(hits) == 2
    assert hits[0]["asset_id"] == hits[1]["asset_id"]
    assert len(runtime.workspace.assets.all_ids()) == 1


def test_image_search_empty_index(runtime):
    hits, warnings = runtime.image_search("empty query", k=1)
    assert hits == [] and warnings == []


def test_image_generate_and_failure(runtime):
    asset = runtime.image_generate("a diagram of a microgrid")
    assert runtime.workspace.assets.has_asset(asset)
    meta = runtime.workspace.assets.meta(asset)
    assert meta["provenance"] == "generated"
    assert meta["prompt"] == "a diagram of a microgrid"
    with pytest.raises(ValueError):
        runtime.image_generate("   ")
    before = set(runtime.workspace.assets.all_ids())
    with pytest.raises(GenerationError):
        runtime.image_generate("FAIL now")
    assert set(runtime.workspace.assets.all_ids()) == before  # nothing written


def test_image_edit_lineage(runtime):
    original = runtime.image_generate("base image")
    edited = runtime.image_edit(original, "add contrast")
    assert edited != original
    assert runtime.workspace.assets.has_asset(original)  # original untouched
    chain = runtime.workspace.assets.lineage(edited)
    assert chain[0]["parent"] == original and chain[0]["instruction"] == "add contrast"
    twice = runtime.image_edit(edited, "crop tighter")
    assert [link["parent"] for link in runtime.workspace.assets.lineage(twice)] == \
        [edited, original]


def test_image_edit_missing_asset(runtime):
    with pytest.raises(IntegrityError):
        runtime.image_edit("0" * 64, "whatever")


def test_chart_exec_mock_and_errors(runtime):
    asset = runtime.chart_exec("plot(data)", {"a": 1, "b": 2})
    assert runtime.workspace.assets.has_asset(asset)
    with pytest.raises(ChartExecError):
        runtime.chart_exec("FAIL plot", {})
    with pytest.raises(ChartTimeoutError):
        runtime.chart_exec("SLEEP forever", {})


def test_chart_exec_requires_runner(adapters, workspace):
    adapters.chart = None
    runtime = ToolRuntime(adapters, workspace, scope="s1")
    with pytest.raises(ConfigError):
        runtime.chart_exec("plot(data)", {})


def test_mock_chart_runner_deterministic():
    runner = MockChartRunner()
    a = runner.run("plot", {"x": 1})
    b = runner.run("plot", {"x": 1})
    assert a == b and a[:8] == b"\x89PNG\r\n\x1a\n"


def test_dispatch_valid_call(runtime):
    obs = runtime.dispatch(ToolCall(tool="text_search",
                                    args={"query": "microgrid adoption", "k": 2}))
    assert obs.tool == "text_search"
    assert len(obs.payload["results"]) == 2
    assert obs.fetched_urls == ("https://fixture.test/a", "https://fixture.test/b")


def test_dispatch_unknown_tool(runtime):
    with pytest.raises(ProtocolViolation) as exc_info:
        runtime.dispatch(ToolCall(tool="web_search", args={"query": "x"}))
    assert exc_info.value.code == "unknown-tool"


def test_dispatch_schema_violation(runtime):
    with pytest.raises(ProtocolViolation) as exc_info:
        runtime.dispatch(ToolCall(tool="text_search", args={"query": "x", "k": 0}))
    assert exc_info.value.code == "bad-args"
    assert "minimum" in str(exc_info.value) or "0" in str(exc_info.value)


def test_mock_determinism_two_runs(web_fixture_dir, tmp_path, query):
    """Identical fixture runs produce identical ledgers and asset stores."""
    from ptah.clock import FixedClock
    from ptah.tools import FixtureAdapters
    from ptah.workspace import Workspace

    snapshots = []
    for name in ("w1", "w2"):
        ws = Workspace.init(query, tmp_path / name, clock=FixedClock())
        adapters = FixtureAdapters(web_fixture_dir, chart_runner=MockChartRunner())
        rt = ToolRuntime(adapters, ws, scope="s1", gateway=None)
        rt.text_search("microgrid adoption", k=2)
        rt.image_search("aerial photo", k=1)
        rt.chart_exec("plot", {"a": 1})
        snapshots.append((rt.ledger.urls(), ws.assets.all_ids()))
    assert snapshots[0] == snapshots[1]


def test_visited_url_ledger_completeness(runtime):
    """Every URL in any SearchResult or non-degraded PageDocument is ledgered."""
    results = runtime.text_search("microgrid adoption", k=2)
    page = runtime.fetch_page("https://fixture.test/a")
    urls = [r.url for r in results] + [page.url]
    ledger = set(runtime.ledger.urls())
    for url in urls:
        assert canonical_url(url) in ledger
