"""Canonical URL behavior backing the citation-membership gate."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptah.urls import canonical_url, citation_id_for, is_valid_url


@pytest.mark.parametrize("raw, expected", [
    ("https://Example.COM/Path/", "https://example.com/Path"),
    ("HTTP://example.com/a#section", "http://example.com/a"),
    ("https://example.com/a?b=1&c=2", "https://example.com/a?b=1&c=2"),
    ("https://example.com/", "https://example.com"),
    ("https://example.com:8080/x/", "https://example.com:8080/x"),
])
def test_canonical_forms(raw, expected):
    assert canonical_url(raw) == expected


def test_trailing_slash_equivalence():
    assert canonical_url("https://example.com/a") == canonical_url("https://example.com/a/")


def test_invalid_urls_rejected():
    for bad in ("not a url", "ftp://example.com/x", "https://", "//missing-scheme"):
        assert not is_valid_url(bad)
        with pytest.raises(ValueError):
            canonical_url(bad)


def test_citation_ids_content_addressed():
    a = citation_id_for("https://Example.com/a/")
    b = citation_id_for("https://example.com/a")
    assert a == b
    assert a.startswith("c") and len(a) == 13
    assert citation_id_for("https://example.com/other") != a


_hosts = st.from_regex(r"[a-z]{1,10}\.(com|org|net)", fullmatch=True)
_paths = st.from_regex(r"(/[a-zA-Z0-9_-]{1,8}){0,3}/?", fullmatch=True)


@settings(max_examples=100, deadline=None)
@given(scheme=st.sampled_from(["http", "https", "HTTP", "Https"]),
       host=_hosts, path=_paths,
       fragment=st.sampled_from(["", "#top", "#a-b"]))
def test_canonicalization_idempotent(scheme, host, path, fragment):
    url = f"{scheme}://{host}{path}{fragment}"
    canon = canonical_url(url)
    assert canonical_url(canon) == canon
    assert "#" not in canon
    assert not canon.endswith("/")
