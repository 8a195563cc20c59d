"""Live HTTP adapters and their fixture-backed mocks.

The fixture directory (`fixtures/web/` in tests) contains an `index.json`:

    {
      "search":       {"<query>": [{"url": ..., "title": ..., "snippet": ...}]},
      "image_search": {"<query>": [{"url": ..., "title": ...}]},
      "pages":        {"<url>": "pages/some.html"},
      "files":        {"<url>": "images/some.png"}
    }

plus the referenced page/image files. Unknown search queries return no
results; unknown URLs raise TransportError like an unreachable host would.

Mock generation/editing are deterministic: generation derives a solid-color
PNG from the prompt hash, editing re-encodes with an instruction marker so
the output is a new content-addressed asset. A prompt or instruction
starting with "FAIL" simulates a backend failure.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

from ..errors import EditError, GenerationError, TransportError

MAX_IMAGE_BYTES = 10 * 1024 * 1024  # download cap per image
FETCH_TIMEOUT_S = 20.0


def deterministic_png(seed: str, size: tuple = (512, 512)) -> bytes:
    """Solid-color PNG derived from a seed string; byte-stable across runs."""
    from PIL import Image

    digest = hashlib.sha256(seed.encode("utf-8")).digest()
    color = (digest[0], digest[1], digest[2])
    img = Image.new("RGB", size, color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class FixtureAdapters:
    """Deterministic adapters reading a fixture directory."""

    def __init__(self, fixtures_dir, chart_runner=None):
        self.dir = Path(fixtures_dir)
        index_path = self.dir / "index.json"
        if index_path.exists():
            self.index = json.loads(index_path.read_text(encoding="utf-8"))
        else:
            self.index = {}
        self.chart = chart_runner

    def search(self, query: str, k: int) -> list:
        hits = self.index.get("search", {}).get(query, [])
        return [dict(h) for h in hits[:k]]

    def search_images(self, query: str, k: int) -> list:
        hits = self.index.get("image_search", {}).get(query, [])
        return [dict(h) for h in hits[:k]]

    def fetch(self, url: str) -> str:
        rel = self.index.get("pages", {}).get(url)
        if rel is None:
            raise TransportError(f"no fixture page for {url}")
        return (self.dir / rel).read_text(encoding="utf-8")

    def download(self, url: str) -> bytes:
        rel = self.index.get("files", {}).get(url)
        if rel is None:
            raise TransportError(f"no fixture file for {url}")
        return (self.dir / rel).read_bytes()

    def generate_image(self, prompt: str) -> bytes:
        if prompt.startswith("FAIL"):
            raise GenerationError("simulated generation backend failure")
        return deterministic_png("generate:" + prompt)

    def edit_image(self, data: bytes, instruction: str) -> bytes:
        if instruction.startswith("FAIL"):
            raise EditError("simulated edit backend failure")
        from PIL import Image
        from PIL.PngImagePlugin import PngInfo

        img = Image.open(io.BytesIO(data))
        img.load()
        info = PngInfo()
        info.add_text("edit", hashlib.sha256(instruction.encode("utf-8")).hexdigest()[:16])
        buf = io.BytesIO()
        img.convert("RGB").save(buf, format="PNG", pnginfo=info)
        return buf.getvalue()


class LiveAdapters:
    """HTTP adapters for real runs.

    Search speaks a Serper-shaped JSON endpoint; page reading is a plain GET
    converted by the built-in HTML-to-Markdown extractor unless a reader
    endpoint is configured (reader endpoints take the target URL appended).
    """

    def __init__(self, search_endpoint: str = "", search_api_key: str = "",
                 image_search_endpoint: str = "", reader_endpoint: str = "",
                 generate_endpoint: str = "", edit_endpoint: str = "",
                 api_key: str = "", chart_runner=None):
        self.search_endpoint = search_endpoint
        self.search_api_key = search_api_key
        self.image_search_endpoint = image_search_endpoint
        self.reader_endpoint = reader_endpoint
        self.generate_endpoint = generate_endpoint
        self.edit_endpoint = edit_endpoint
        self.api_key = api_key
        self.chart = chart_runner

    def _post_json(self, endpoint: str, body: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.search_api_key:
            headers["X-API-KEY"] = self.search_api_key
        try:
            resp = requests.post(endpoint, json=body, headers=headers, timeout=FETCH_TIMEOUT_S)
        except requests.RequestException as exc:
            raise TransportError(f"endpoint {endpoint} unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"endpoint {endpoint} returned {resp.status_code}")
        return resp.json()

    def search(self, query: str, k: int) -> list:
        if not self.search_endpoint:
            raise TransportError("no search endpoint configured")
        data = self._post_json(self.search_endpoint, {"q": query, "num": k})
        results = data.get("results") or data.get("organic") or []
        return [{"url": r.get("link") or r.get("url", ""),
                 "title": r.get("title", ""),
                 "snippet": r.get("snippet", "")} for r in results[:k]]

    def search_images(self, query: str, k: int) -> list:
        if not self.image_search_endpoint:
            raise TransportError("no image search endpoint configured")
        data = self._post_json(self.image_search_endpoint, {"q": query, "num": k})
        hits = data.get("images") or data.get("results") or []
        return [{"url": h.get("imageUrl") or h.get("url", ""),
                 "title": h.get("title", "")} for h in hits[:k]]

    def fetch(self, url: str) -> str:
        import requests

        target = self.reader_endpoint.rstrip("/") + "/" + url if self.reader_endpoint else url
        try:
            resp = requests.get(target, timeout=FETCH_TIMEOUT_S)
        except requests.RequestException as exc:
            raise TransportError(f"fetch failed for {url}: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(f"fetch of {url} returned {resp.status_code}")
        return resp.text

    def download(self, url: str) -> bytes:
        import requests

        try:
            resp = requests.get(url, timeout=FETCH_TIMEOUT_S, stream=True)
        except requests.RequestException as exc:
            raise TransportError(f"download failed for {url}: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(f"download of {url} returned {resp.status_code}")
        data = resp.raw.read(MAX_IMAGE_BYTES + 1)
        if len(data) > MAX_IMAGE_BYTES:
            raise TransportError(f"image at {url} exceeds {MAX_IMAGE_BYTES} bytes")
        return data

    def generate_image(self, prompt: str) -> bytes:
        if not self.generate_endpoint:
            raise GenerationError("no image generation endpoint configured")
        data = self._post_json(self.generate_endpoint, {"prompt": prompt})
        import base64

        try:
            return base64.b64decode(data["image_base64"])
        except (KeyError, ValueError) as exc:
            raise GenerationError(f"malformed generation response: {exc}") from exc

    def edit_image(self, data: bytes, instruction: str) -> bytes:
        if not self.edit_endpoint:
            raise EditError("no image edit endpoint configured")
        import base64

        body = {"image_base64": base64.b64encode(data).decode("ascii"),
                "instruction": instruction}
        resp = self._post_json(self.edit_endpoint, body)
        try:
            return base64.b64decode(resp["image_base64"])
        except (KeyError, ValueError) as exc:
            raise EditError(f"malformed edit response: {exc}") from exc
