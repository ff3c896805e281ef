"""Deterministic scripted chat backend for tests, benchmarks and demos.

Resolution is a pure function of (script key, transcript): entries for the
key are scanned in registration order and the first one whose conditions
all hold wins. Conditions: exact transcript digest, substring of the
concatenated message text, or structured-retry attempt number. An entry
with no conditions acts as the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from feedmask.errors import NoScriptError
from feedmask.gateway.messages import ChatRequest


@dataclass
class ScriptEntry:
    text: str
    contains: tuple[str, ...] = ()
    digest: str | None = None
    attempt: int | None = None

    def matches(self, request: ChatRequest, full_text: str) -> bool:
        if self.digest is not None and request.digest() != self.digest:
            return False
        if any(marker not in full_text for marker in self.contains):
            return False
        if self.attempt is not None and request.attempt_number() != self.attempt:
            return False
        return True


class ScriptedStub:
    backend_id = "stub"

    def __init__(self):
        self._scripts: dict[str, list[ScriptEntry]] = {}

    def register(
        self,
        key: str,
        text: str | None = None,
        json_body: dict | list | None = None,
        contains: str | list[str] | None = None,
        digest: str | None = None,
        attempt: int | None = None,
    ) -> None:
        if (text is None) == (json_body is None):
            raise ValueError("provide exactly one of text/json_body")
        if json_body is not None:
            text = json.dumps(json_body, sort_keys=True)
        if contains is None:
            markers: tuple[str, ...] = ()
        elif isinstance(contains, str):
            markers = (contains,)
        else:
            markers = tuple(contains)
        self._scripts.setdefault(key, []).append(
            ScriptEntry(text=text, contains=markers, digest=digest, attempt=attempt)
        )

    @classmethod
    def from_dir(cls, path: str | Path) -> "ScriptedStub":
        """Load every *.json script file in a directory (sorted by name)."""
        stub = cls()
        path = Path(path)
        if not path.is_dir():
            raise NoScriptError(f"script directory {path} does not exist")
        for file in sorted(path.glob("*.json")):
            doc = json.loads(file.read_text(encoding="utf-8"))
            key = doc["key"]
            for entry in doc["entries"]:
                stub.register(
                    key,
                    text=entry.get("text"),
                    json_body=entry.get("json"),
                    contains=entry.get("contains"),
                    digest=entry.get("digest"),
                    attempt=entry.get("attempt"),
                )
        return stub

    def keys(self) -> list[str]:
        return list(self._scripts)

    def complete(self, request: ChatRequest) -> str:
        if request.script_key is None:
            raise NoScriptError("request carries no script key")
        entries = self._scripts.get(request.script_key)
        if not entries:
            raise NoScriptError(f"no script registered for key {request.script_key!r}")
        full_text = "\n".join(m.text for m in request.messages)
        for entry in entries:
            if entry.matches(request, full_text):
                return entry.text
        raise NoScriptError(
            f"no entry of {request.script_key!r} matches the transcript "
            f"(digest {request.digest()[:12]}, attempt {request.attempt_number()})"
        )
