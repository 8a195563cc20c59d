"""Deterministic HTML serialization of a block report, plus document checks.

``generate_html`` is a pure function of (report, template): same input,
same bytes. One <section> per contiguous run of blocks sharing a
section_id, a <figure> with <figcaption> per visual, and a numbered,
anchored reference list. The built-in style sheet is fixed and hashed
into ``style_id``.

The Markdown subset rendered here is what the writer roles emit:
headings, paragraphs, lists, pipe tables, fenced code, bold/italic/code
spans, links, and [cite:id] markers that become superscript anchors.
"""

from __future__ import annotations

import hashlib
import html as html_mod
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

from .errors import IntegrityError
from .models import Report, TextBlock, VisualBlock

TEMPLATE_VERSION = "ptah-default-1"

_CSS = """
:root { color-scheme: light; }
body { margin: 0; font-family: Georgia, 'Times New Roman', serif;
       color: #1c1e21; background: #fafafa; line-height: 1.65; }
main { max-width: 860px; margin: 0 auto; padding: 2rem 1.5rem 4rem; }
h1 { font-size: 2rem; line-height: 1.25; border-bottom: 2px solid #1c1e21;
     padding-bottom: .5rem; }
h2 { font-size: 1.45rem; margin-top: 2.2rem; }
h3 { font-size: 1.15rem; margin-top: 1.6rem; }
p { margin: .9rem 0; }
figure { margin: 1.6rem 0; text-align: center; }
figure img { max-width: 100%; height: auto; border: 1px solid #ddd;
             border-radius: 4px; }
figcaption { font-size: .88rem; color: #555; margin-top: .45rem;
             font-style: italic; }
table { border-collapse: collapse; margin: 1rem 0; width: 100%; }
th, td { border: 1px solid #ccc; padding: .4rem .6rem; text-align: left;
         font-size: .92rem; }
th { background: #f0f0f0; }
code { background: #eee; padding: .1rem .3rem; border-radius: 3px;
       font-size: .88em; }
pre { background: #272822; color: #f8f8f2; padding: 1rem; overflow-x: auto;
      border-radius: 4px; }
pre code { background: none; padding: 0; }
a.cite { text-decoration: none; color: #0b5394; }
section.references ol { padding-left: 1.4rem; }
section.references li { margin: .35rem 0; font-size: .92rem; }
""".strip()

STYLE_ID = hashlib.sha256(_CSS.encode("utf-8")).hexdigest()[:12]

VOID_TAGS = {"img", "br", "hr", "meta", "link", "input", "source", "wbr", "col", "area", "base"}


@dataclass
class HtmlDocument:
    html: str
    asset_manifest: list = field(default_factory=list)
    style_id: str = STYLE_ID

    def to_dict(self) -> dict:
        return {"html": self.html, "asset_manifest": list(self.asset_manifest),
                "style_id": self.style_id}

    @classmethod
    def from_dict(cls, d: dict) -> "HtmlDocument":
        return cls(html=d["html"], asset_manifest=list(d.get("asset_manifest", [])),
                   style_id=d.get("style_id", STYLE_ID))


# ---------------------------------------------------------------------------
# Markdown rendering
# ---------------------------------------------------------------------------

_BOLD_RE = re.compile(r"\*\*(.+?)\*\*")
_ITALIC_RE = re.compile(r"(?<!\*)\*([^*]+)\*(?!\*)")
_CODE_RE = re.compile(r"`([^`]+)`")
_LINK_RE = re.compile(r"\[([^\]]+)\]\((https?://[^)\s]+)\)")
_CITE_RE = re.compile(r"\[cite:([^\]\s]+)\]")


def _render_inline(text: str, cite_numbers: dict) -> str:
    escaped = html_mod.escape(text, quote=False)
    escaped = _CODE_RE.sub(lambda m: f"<code>{m.group(1)}</code>", escaped)
    escaped = _BOLD_RE.sub(lambda m: f"<strong>{m.group(1)}</strong>", escaped)
    escaped = _ITALIC_RE.sub(lambda m: f"<em>{m.group(1)}</em>", escaped)
    escaped = _LINK_RE.sub(lambda m: f'<a href="{m.group(2)}">{m.group(1)}</a>', escaped)

    def cite(m):
        cid = m.group(1)
        n = cite_numbers.get(cid)
        if n is None:
            return ""
        return f'<a class="cite" href="#ref-{cid}"><sup>[{n}]</sup></a>'

    return _CITE_RE.sub(cite, escaped)


def render_markdown(markdown: str, cite_numbers: dict) -> str:
    """Block-level renderer for the writer's Markdown subset.

    Headings shift down one level (h1 belongs to the report title).
    """
    lines = markdown.split("\n")
    out: list = []
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        stripped = line.strip()
        if not stripped:
            i += 1
            continue
        if stripped.startswith("```"):
            code_lines = []
            i += 1
            while i < n and not lines[i].strip().startswith("```"):
                code_lines.append(lines[i])
                i += 1
            i += 1  # swallow the closing fence
            code = html_mod.escape("\n".join(code_lines), quote=False)
            out.append(f"<pre><code>{code}</code></pre>")
            continue
        m = re.match(r"^(#{1,6})\s+(.*)$", stripped)
        if m:
            level = min(len(m.group(1)) + 1, 6)
            out.append(f"<h{level}>{_render_inline(m.group(2), cite_numbers)}</h{level}>")
            i += 1
            continue
        if re.match(r"^[-*]\s+", stripped):
            items = []
            while i < n and re.match(r"^[-*]\s+", lines[i].strip()):
                items.append(re.sub(r"^[-*]\s+", "", lines[i].strip()))
                i += 1
            lis = "".join(f"<li>{_render_inline(it, cite_numbers)}</li>" for it in items)
            out.append(f"<ul>{lis}</ul>")
            continue
        if re.match(r"^\d+\.\s+", stripped):
            items = []
            while i < n and re.match(r"^\d+\.\s+", lines[i].strip()):
                items.append(re.sub(r"^\d+\.\s+", "", lines[i].strip()))
                i += 1
            lis = "".join(f"<li>{_render_inline(it, cite_numbers)}</li>" for it in items)
            out.append(f"<ol>{lis}</ol>")
            continue
        if stripped.startswith("|") and stripped.endswith("|"):
            rows = []
            while i < n and lines[i].strip().startswith("|") and lines[i].strip().endswith("|"):
                rows.append([c.strip() for c in lines[i].strip().strip("|").split("|")])
                i += 1
            header = None
            body = rows
            if len(rows) >= 2 and all(re.fullmatch(r":?-{2,}:?", c) for c in rows[1]):
                header, body = rows[0], rows[2:]
            parts = ["<table>"]
            if header is not None:
                cells = "".join(f"<th>{_render_inline(c, cite_numbers)}</th>" for c in header)
                parts.append(f"<thead><tr>{cells}</tr></thead>")
            parts.append("<tbody>")
            for row in body:
                cells = "".join(f"<td>{_render_inline(c, cite_numbers)}</td>" for c in row)
                parts.append(f"<tr>{cells}</tr>")
            parts.append("</tbody></table>")
            out.append("".join(parts))
            continue
        # paragraph: gather until blank line or a structural line
        para = [stripped]
        i += 1
        while i < n:
            nxt = lines[i].strip()
            if (not nxt or nxt.startswith("#") or nxt.startswith("```")
                    or re.match(r"^[-*]\s+", nxt) or re.match(r"^\d+\.\s+", nxt)
                    or (nxt.startswith("|") and nxt.endswith("|"))):
                break
            para.append(nxt)
            i += 1
        out.append(f"<p>{_render_inline(' '.join(para), cite_numbers)}</p>")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Document generation
# ---------------------------------------------------------------------------


def generate_html(report: Report, asset_store) -> HtmlDocument:
    """Serialize the report into one self-contained HTML page.

    Every visual's asset must exist in the store; image srcs are relative
    ``assets/<sha>.<ext>`` paths, matching the copies the pipeline places
    next to the written document.
    """
    manifest: list = []
    src_for: dict = {}
    for _, block in report.visual_blocks():
        path = asset_store.find(block.asset_id)
        if path is None:
            raise IntegrityError(f"report references missing asset {block.asset_id}")
        rel = f"assets/{path.name}"
        src_for[block.asset_id] = rel
        if rel not in manifest:
            manifest.append(rel)

    cite_numbers = {c.id: i + 1 for i, c in enumerate(report.references)}

    body: list = []
    body.append(f"<h1>{html_mod.escape(report.title, quote=False)}</h1>")
    current_section = None
    open_section = False
    for block in report.blocks:
        if block.section_id != current_section:
            if open_section:
                body.append("</section>")
            current_section = block.section_id
            body.append(f'<section id="sec-{html_mod.escape(current_section)}">')
            open_section = True
        if isinstance(block, TextBlock):
            body.append(render_markdown(block.markdown, cite_numbers))
        elif isinstance(block, VisualBlock):
            caption = html_mod.escape(block.caption, quote=False)
            role = html_mod.escape(block.role)
            body.append(
                f'<figure><img src="{src_for[block.asset_id]}" alt="{role}">'
                f"<figcaption>{caption}</figcaption></figure>")
    if open_section:
        body.append("</section>")

    if report.references:
        body.append('<section class="references"><h2>References</h2><ol>')
        for cit in report.references:
            title = html_mod.escape(cit.title or cit.url, quote=False)
            url = html_mod.escape(cit.url)
            body.append(f'<li id="ref-{cit.id}"><a href="{url}">{title}</a></li>')
        body.append("</ol></section>")

    title = html_mod.escape(report.title, quote=False)
    html_text = (
        "<!DOCTYPE html>\n"
        '<html lang="en">\n<head>\n<meta charset="utf-8">\n'
        '<meta name="viewport" content="width=device-width, initial-scale=1">\n'
        f"<title>{title}</title>\n<style>\n{_CSS}\n</style>\n</head>\n<body>\n<main>\n"
        + "\n".join(body)
        + "\n</main>\n</body>\n</html>\n"
    )
    return HtmlDocument(html=html_text, asset_manifest=manifest, style_id=STYLE_ID)


# ---------------------------------------------------------------------------
# Document checks
# ---------------------------------------------------------------------------


class _DocChecker(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.stack: list = []
        self.problems: list = []
        self.img_srcs: list = []
        self.seen_html = False
        self.seen_body = False
        self._text_parts: list = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag == "html":
            self.seen_html = True
        if tag == "body":
            self.seen_body = True
        if tag == "img":
            src = dict(attrs).get("src", "")
            self.img_srcs.append(src)
        if tag in ("script", "style"):
            self._skip += 1
        if tag not in VOID_TAGS:
            self.stack.append(tag)

    def handle_startendtag(self, tag, attrs):
        if tag == "img":
            self.img_srcs.append(dict(attrs).get("src", ""))

    def handle_endtag(self, tag):
        if tag in ("script", "style"):
            self._skip = max(0, self._skip - 1)
        if tag in VOID_TAGS:
            return
        if not self.stack:
            self.problems.append(f"closing </{tag}> with empty stack")
            return
        if self.stack[-1] == tag:
            self.stack.pop()
            return
        if tag in self.stack:
            # mis-nesting: unwind to it
            while self.stack and self.stack[-1] != tag:
                self.problems.append(f"implicitly closed <{self.stack.pop()}>")
            if self.stack:
                self.stack.pop()
        else:
            self.problems.append(f"closing </{tag}> that was never opened")

    def handle_data(self, data):
        if not self._skip:
            self._text_parts.append(data)

    def text(self) -> str:
        return " ".join(" ".join(self._text_parts).split())


def check_html_document(doc: HtmlDocument) -> list:
    """HTML5 sanity: doctype, html/body present, balanced tags, imgs in manifest."""
    problems: list = []
    stripped = doc.html.lstrip()
    if not stripped[:15].lower().startswith("<!doctype html"):
        problems.append("missing <!DOCTYPE html>")
    checker = _DocChecker()
    try:
        checker.feed(doc.html)
        checker.close()
    except Exception as exc:  # html.parser is forgiving; anything here is severe
        problems.append(f"unparseable HTML: {exc}")
        return problems
    if not checker.seen_html:
        problems.append("missing <html> element")
    if not checker.seen_body:
        problems.append("missing <body> element")
    problems.extend(checker.problems)
    for tag in checker.stack:
        problems.append(f"unclosed <{tag}>")
    manifest = set(doc.asset_manifest)
    for src in checker.img_srcs:
        if src not in manifest:
            problems.append(f"<img src={src!r}> not in asset manifest")
    return problems


def extract_text(html_text: str) -> str:
    """Whitespace-normalized text content (for refine guardrails)."""
    checker = _DocChecker()
    checker.feed(html_text)
    checker.close()
    return checker.text()


def image_srcs(html_text: str) -> list:
    checker = _DocChecker()
    checker.feed(html_text)
    checker.close()
    return checker.img_srcs
