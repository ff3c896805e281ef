"""Prompt templates, shipped as versioned files next to this module."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

SYSTEM_PROMPT = "You are a helpful assistant."


@lru_cache(maxsize=None)
def _load(name: str) -> Template:
    path = resources.files("feedmask.gateway").joinpath("templates", f"{name}.txt")
    return Template(path.read_text(encoding="utf-8"))


def render(name: str, **values: str) -> str:
    """Render a named template; missing placeholders raise KeyError."""
    return _load(name).substitute(**values).strip()
