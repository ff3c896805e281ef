"""Chat request/response types shared by every backend."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

ROLES = ("system", "user", "assistant")

# marker appended when a structured reply failed to parse; stub scripts can
# route on it (or on attempt number, which is derived from its count)
CORRECTION_PROMPT = (
    "Your previous reply was not a valid JSON object for the expected format. "
    "Reply again with only a valid JSON object."
)


@dataclass(frozen=True)
class Message:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r}")


@dataclass
class ChatRequest:
    messages: list[Message]
    schema_ref: str | None = None
    temperature: float = 0.0
    seed: int = 0
    script_key: str | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must be system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.schema_ref is not None and self.temperature != 0:
            raise ValueError("structured requests require temperature 0")

    def digest(self) -> str:
        payload = json.dumps([[m.role, m.text] for m in self.messages], ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def attempt_number(self) -> int:
        """1 + number of correction turns already present in the transcript."""
        return 1 + sum(1 for m in self.messages if m.role == "user" and m.text == CORRECTION_PROMPT)

    def extended(self, *extra: Message) -> "ChatRequest":
        return ChatRequest(
            messages=[*self.messages, *extra],
            schema_ref=self.schema_ref,
            temperature=self.temperature,
            seed=self.seed,
            script_key=self.script_key,
        )


@dataclass
class ChatResponse:
    text: str
    parsed: dict | None = None
    attempts: int = 1
    backend_id: str = ""


def chat(script_key: str, *turns: tuple[str, str], schema_ref: str | None = None, seed: int = 0) -> ChatRequest:
    """Convenience constructor: chat("key", ("system", "..."), ("user", "..."))."""
    return ChatRequest(
        messages=[Message(role, text) for role, text in turns],
        schema_ref=schema_ref,
        seed=seed,
        script_key=script_key,
    )
