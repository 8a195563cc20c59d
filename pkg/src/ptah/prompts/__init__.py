"""Prompt templates as package data.

Templates are plain text with ``str.format`` placeholders. Each template's
SHA-256 is available so runs can log exactly which prompt text produced an
artifact.
"""

from __future__ import annotations

import hashlib
from importlib import resources


def load_prompt(name: str) -> str:
    ref = resources.files(__package__).joinpath(f"{name}.md")
    return ref.read_text(encoding="utf-8")


def prompt_hash(name: str) -> str:
    return hashlib.sha256(load_prompt(name).encode("utf-8")).hexdigest()[:16]
