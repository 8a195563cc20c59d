"""Canonical URL form used everywhere citations meet the visited-URL ledger.

Two URLs are "the same source" iff their canonical forms are byte-equal:
lowercase scheme and host, fragment dropped, trailing slashes dropped,
query string kept verbatim.
"""

from __future__ import annotations

from urllib.parse import urlsplit, urlunsplit


def is_valid_url(url: str) -> bool:
    """True for syntactically plausible absolute http(s) URLs."""
    try:
        parts = urlsplit(url)
    except ValueError:
        return False
    return parts.scheme.lower() in ("http", "https") and bool(parts.netloc)


def canonical_url(url: str) -> str:
    """Normalize a URL for exact-match citation checks.

    Raises ValueError for URLs that are not valid absolute http(s) URLs.
    """
    if not is_valid_url(url):
        raise ValueError(f"not a valid absolute http(s) URL: {url!r}")
    parts = urlsplit(url)
    scheme = parts.scheme.lower()
    host = parts.hostname or ""
    netloc = host.lower()
    if parts.port is not None:
        netloc = f"{netloc}:{parts.port}"
    path = parts.path.rstrip("/")
    return urlunsplit((scheme, netloc, path, parts.query, ""))


def citation_id_for(url: str) -> str:
    """Content-addressed citation id derived from the canonical URL."""
    import hashlib

    canon = canonical_url(url)
    return "c" + hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
