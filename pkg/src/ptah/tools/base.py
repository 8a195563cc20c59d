"""Tool dispatch: argument schemas, the runtime facade, observation building.

A ToolRuntime is scoped to one ledger ("plan" or a section id) so that
citation-membership checks can be made per section. Dispatch validates the
call against the tool's schema and turns protocol breaches into
ProtocolViolation, which the verifier counts as fatal rule issues.
"""

from __future__ import annotations

import hashlib
from typing import Optional

import jsonschema

from ..errors import ConfigError, IntegrityError, ProtocolViolation, TransportError
from ..gateway import DecodeParams, Message, ModelRequest
from ..models import ToolCall, ToolObservation
from ..prompts import load_prompt
from .charts import DEFAULT_TIMEOUT_S
from .web import PageDocument, SearchResult, html_to_markdown
from ..urls import is_valid_url

TOOL_SCHEMAS = {
    "text_search": {
        "type": "object",
        "properties": {
            "query": {"type": "string", "minLength": 1},
            "k": {"type": "integer", "minimum": 1},
        },
        "required": ["query"],
        "additionalProperties": False,
    },
    "fetch_page": {
        "type": "object",
        "properties": {"url": {"type": "string", "minLength": 1}},
        "required": ["url"],
        "additionalProperties": False,
    },
    "image_search": {
        "type": "object",
        "properties": {
            "query": {"type": "string", "minLength": 1},
            "k": {"type": "integer", "minimum": 1},
        },
        "required": ["query"],
        "additionalProperties": False,
    },
    "image_generate": {
        "type": "object",
        "properties": {"prompt": {"type": "string", "minLength": 1}},
        "required": ["prompt"],
        "additionalProperties": False,
    },
    "image_edit": {
        "type": "object",
        "properties": {
            "asset_id": {"type": "string", "minLength": 1},
            "instruction": {"type": "string", "minLength": 1},
        },
        "required": ["asset_id", "instruction"],
        "additionalProperties": False,
    },
    "chart_exec": {
        "type": "object",
        "properties": {"script": {"type": "string", "minLength": 1}, "data": {}},
        "required": ["script", "data"],
        "additionalProperties": False,
    },
}

TOOL_NAMES = tuple(TOOL_SCHEMAS)

DEFAULT_SEARCH_K = 5  # top-K pages retrieved per query


class ToolRuntime:
    """Tool adapters bound to one workspace scope.

    ``gateway`` is used to summarize fetched pages during text search; pass
    None to skip summarization (image-only flows).
    """

    def __init__(self, adapters, workspace, scope: str, gateway=None,
                 query_text: str = "", search_k: int = DEFAULT_SEARCH_K,
                 chart_timeout_s: float = DEFAULT_TIMEOUT_S):
        self.adapters = adapters
        self.workspace = workspace
        self.scope = scope
        self.gateway = gateway
        self.query_text = query_text
        self.search_k = search_k
        self.chart_timeout_s = chart_timeout_s
        self.ledger = workspace.ledger(scope)
        self.page_store = workspace.pages(scope)

    # -- individual operations ------------------------------------------------

    def fetch_page(self, url: str) -> PageDocument:
        if not is_valid_url(url):
            raise ValueError(f"not a valid URL: {url!r}")
        fetched_at = self.workspace.clock.now_iso()
        try:
            html = self.adapters.fetch(url)
        except TransportError:
            # Failed fetches were never accessed, so they stay off the ledger.
            return PageDocument(url=url, markdown="", image_urls=(),
                                fetched_at=fetched_at, degraded=True)
        markdown, image_urls = html_to_markdown(html, base_url=url)
        page = PageDocument(url=url, markdown=markdown, image_urls=tuple(image_urls),
                            fetched_at=fetched_at, degraded=False)
        self.ledger.add(url)
        self.page_store.put(url, page.to_dict())
        return page

    def _summarize(self, page: PageDocument) -> Optional[str]:
        if self.gateway is None or page.degraded or not page.markdown:
            return None
        template = load_prompt("summarize")
        prompt = template.format(query=self.query_text, markdown=page.markdown[:6000])
        request = ModelRequest(
            role_hint="researcher",
            messages=(Message("user", prompt),),
            decode=DecodeParams(temperature=0.3),
        )
        response = self.gateway.complete(request)
        return response.text.strip()

    def text_search(self, query: str, k: Optional[int] = None) -> list:
        k = self.search_k if k is None else k
        if k < 1:
            raise ValueError("text_search requires k >= 1")
        hits = self.adapters.search(query, k)[:k]
        results = []
        for i, hit in enumerate(hits, start=1):
            page = self.fetch_page(hit["url"])
            summary = self._summarize(page)
            results.append(SearchResult(rank=i, url=hit["url"],
                                        title=hit.get("title", ""),
                                        snippet=hit.get("snippet", ""),
                                        summary=summary))
        return results

    def image_search(self, query: str, k: Optional[int] = None) -> tuple:
        """Returns (hits, warnings); each hit is {"url", "title", "asset_id"}."""
        k = self.search_k if k is None else k
        if k < 1:
            raise ValueError("image_search requires k >= 1")
        hits = self.adapters.search_images(query, k)[:k]
        stored = []
        warnings = []
        for hit in hits:
            try:
                data = self.adapters.download(hit["url"])
            except TransportError as exc:
                warnings.append(f"download failed for {hit['url']}: {exc}")
                continue
            asset_id = self.workspace.assets.store(
                data, meta={"provenance": "search", "source_url": hit["url"],
                            "title": hit.get("title", ""), "query": query})
            stored.append({"url": hit["url"], "title": hit.get("title", ""),
                           "asset_id": asset_id})
        return stored, warnings

    def image_generate(self, prompt: str) -> str:
        if not prompt.strip():
            raise ValueError("image_generate requires a non-empty prompt")
        data = self.adapters.generate_image(prompt)
        return self.workspace.assets.store(
            data, meta={"provenance": "generated", "prompt": prompt})

    def image_edit(self, asset_id: str, instruction: str) -> str:
        if not instruction.strip():
            raise ValueError("image_edit requires a non-empty instruction")
        if not self.workspace.assets.has_asset(asset_id):
            raise IntegrityError(f"cannot edit missing asset {asset_id}")
        original = self.workspace.assets.read(asset_id)
        edited = self.adapters.edit_image(original, instruction)
        return self.workspace.assets.store(
            edited, meta={"provenance": "edited", "parent": asset_id,
                          "instruction": instruction})

    def chart_exec(self, script: str, data) -> str:
        runner = getattr(self.adapters, "chart", None)
        if runner is None:
            raise ConfigError("no chart runner configured and chart mock disabled")
        image = runner.run(script, data, timeout_s=self.chart_timeout_s)
        script_hash = hashlib.sha256(script.encode("utf-8")).hexdigest()[:16]
        return self.workspace.assets.store(
            image, meta={"provenance": "generated", "kind": "chart",
                         "script_sha": script_hash, "data": data})

    # -- dispatch ----------------------------------------------------------------

    def dispatch(self, call: ToolCall) -> ToolObservation:
        if call.tool not in TOOL_SCHEMAS:
            raise ProtocolViolation(f"unknown tool {call.tool!r}", code="unknown-tool")
        validator = jsonschema.Draft202012Validator(TOOL_SCHEMAS[call.tool])
        errors = ["/".join(str(p) for p in e.absolute_path) + ": " + e.message
                  for e in validator.iter_errors(call.args)]
        if errors:
            raise ProtocolViolation(
                f"args for {call.tool} failed schema: " + "; ".join(errors),
                code="bad-args")

        if call.tool == "text_search":
            results = self.text_search(call.args["query"], call.args.get("k"))
            return ToolObservation(
                tool=call.tool,
                payload={"results": [r.to_dict() for r in results]},
                fetched_urls=tuple(r.url for r in results))
        if call.tool == "fetch_page":
            page = self.fetch_page(call.args["url"])
            return ToolObservation(tool=call.tool, payload=page.to_dict(),
                                   fetched_urls=(page.url,) if not page.degraded else ())
        if call.tool == "image_search":
            stored, warnings = self.image_search(call.args["query"], call.args.get("k"))
            return ToolObservation(
                tool=call.tool,
                payload={"hits": stored, "warnings": warnings},
                asset_ids=tuple(h["asset_id"] for h in stored))
        if call.tool == "image_generate":
            asset_id = self.image_generate(call.args["prompt"])
            return ToolObservation(tool=call.tool, payload={"asset_id": asset_id},
                                   asset_ids=(asset_id,))
        if call.tool == "image_edit":
            asset_id = self.image_edit(call.args["asset_id"], call.args["instruction"])
            return ToolObservation(
                tool=call.tool,
                payload={"asset_id": asset_id, "parent": call.args["asset_id"]},
                asset_ids=(asset_id,))
        if call.tool == "chart_exec":
            asset_id = self.chart_exec(call.args["script"], call.args["data"])
            return ToolObservation(tool=call.tool, payload={"asset_id": asset_id},
                                   asset_ids=(asset_id,))
        raise ProtocolViolation(f"unroutable tool {call.tool!r}", code="unknown-tool")
