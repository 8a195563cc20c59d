"""Text search and page reading: HTML to Markdown plus image-URL extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Optional
from urllib.parse import urljoin


@dataclass(frozen=True)
class SearchResult:
    rank: int  # 1-based, contiguous
    url: str
    title: str
    snippet: str
    summary: Optional[str] = None

    def to_dict(self) -> dict:
        return {"rank": self.rank, "url": self.url, "title": self.title,
                "snippet": self.snippet, "summary": self.summary}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        return cls(rank=d["rank"], url=d["url"], title=d.get("title", ""),
                   snippet=d.get("snippet", ""), summary=d.get("summary"))


@dataclass(frozen=True)
class PageDocument:
    url: str
    markdown: str
    image_urls: tuple = ()
    fetched_at: str = ""
    degraded: bool = False  # fetch failed; markdown may be empty only then

    def to_dict(self) -> dict:
        return {"url": self.url, "markdown": self.markdown,
                "image_urls": list(self.image_urls),
                "fetched_at": self.fetched_at, "degraded": self.degraded}

    @classmethod
    def from_dict(cls, d: dict) -> "PageDocument":
        return cls(url=d["url"], markdown=d.get("markdown", ""),
                   image_urls=tuple(d.get("image_urls", [])),
                   fetched_at=d.get("fetched_at", ""),
                   degraded=d.get("degraded", False))


_BLOCK_TAGS = {"p", "div", "section", "article", "header", "footer", "blockquote",
               "table", "tr"}
_SKIP_TAGS = {"script", "style", "noscript", "svg", "head"}
_HEADINGS = {"h1": 1, "h2": 2, "h3": 3, "h4": 4, "h5": 5, "h6": 6}


class _MarkdownExtractor(HTMLParser):
    """Lossy HTML -> Markdown conversion tuned for harvesting, not fidelity.

    Collects image URLs (absolutized against the page URL) in document
    order and keeps image references inline so surrounding context can be
    windowed later.
    """

    def __init__(self, base_url: str):
        super().__init__(convert_charrefs=True)
        self.base_url = base_url
        self.parts: list = []
        self.image_urls: list = []
        self._skip_depth = 0
        self._list_stack: list = []
        self._pre = False
        self._cell = False

    # -- helpers

    def _emit(self, text: str) -> None:
        self.parts.append(text)

    def _break(self) -> None:
        if self.parts and not self.parts[-1].endswith("\n\n"):
            self.parts.append("\n\n")

    # -- parser hooks

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        attrs = dict(attrs)
        if tag in _HEADINGS:
            self._break()
            self._emit("#" * _HEADINGS[tag] + " ")
        elif tag == "br":
            self._emit("\n")
        elif tag in ("ul", "ol"):
            self._break()
            self._list_stack.append(tag)
        elif tag == "li":
            marker = "1." if self._list_stack and self._list_stack[-1] == "ol" else "-"
            self._emit(f"\n{marker} ")
        elif tag == "img":
            src = attrs.get("src", "")
            if src:
                absolute = urljoin(self.base_url, src)
                self.image_urls.append(absolute)
                alt = attrs.get("alt", "")
                self._break()
                self._emit(f"![{alt}]({absolute})")
                self._break()
        elif tag == "a":
            self._emit("[")
        elif tag in ("strong", "b"):
            self._emit("**")
        elif tag in ("em", "i"):
            self._emit("*")
        elif tag == "code" and not self._pre:
            self._emit("`")
        elif tag == "pre":
            self._break()
            self._emit("```\n")
            self._pre = True
        elif tag in ("td", "th"):
            self._emit("| ")
            self._cell = True
        elif tag in _BLOCK_TAGS:
            self._break()
        self._last_attrs = attrs

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in _HEADINGS:
            self._break()
        elif tag in ("ul", "ol"):
            if self._list_stack:
                self._list_stack.pop()
            self._break()
        elif tag == "a":
            href = getattr(self, "_last_attrs", {}).get("href", "")
            absolute = urljoin(self.base_url, href) if href else ""
            self._emit(f"]({absolute})")
        elif tag in ("strong", "b"):
            self._emit("**")
        elif tag in ("em", "i"):
            self._emit("*")
        elif tag == "code" and not self._pre:
            self._emit("`")
        elif tag == "pre":
            self._emit("\n```")
            self._break()
            self._pre = False
        elif tag in ("td", "th"):
            self._emit(" ")
            self._cell = False
        elif tag == "tr":
            self._emit("|\n")
        elif tag in _BLOCK_TAGS:
            self._break()

    def handle_data(self, data):
        if self._skip_depth:
            return
        if self._pre:
            self._emit(data)
            return
        collapsed = " ".join(data.split())
        if collapsed:
            if self.parts and self.parts[-1][-1:] not in ("", "\n", " ", "(", "[", "*", "`", "#"):
                self._emit(" ")
            self._emit(collapsed)

    def result(self) -> str:
        text = "".join(self.parts)
        lines = [ln.rstrip() for ln in text.split("\n")]
        out: list = []
        blank = 0
        for ln in lines:
            if not ln:
                blank += 1
                if blank > 1:
                    continue
            else:
                blank = 0
            out.append(ln)
        return "\n".join(out).strip()


def html_to_markdown(html: str, base_url: str = "") -> tuple:
    """Returns (markdown, image_urls) with image URLs in document order."""
    parser = _MarkdownExtractor(base_url)
    parser.feed(html)
    parser.close()
    return parser.result(), parser.image_urls
