"""Single entry point every other module talks to a model through."""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from feedmask.errors import GatewayError, SchemaViolationError
from feedmask.gateway.messages import CORRECTION_PROMPT, ChatRequest, ChatResponse, Message
from feedmask.gateway.schemas import SchemaRegistry, default_registry

STRUCTURED_ATTEMPTS = 3


def extract_json(text: str):
    """Pull the first balanced-looking JSON object out of free text.

    Models wrap JSON in prose or code fences often enough that strict
    parsing of the whole reply would waste retry attempts.
    """
    try:
        return json.loads(text)
    except ValueError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end <= start:
        raise ValueError("no JSON object found in reply")
    return json.loads(text[start : end + 1])


class Gateway:
    def __init__(self, backend, embedder, schemas: SchemaRegistry | None = None):
        self.backend = backend
        self.embedder = embedder
        self.schemas = schemas if schemas is not None else default_registry()

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = self.backend.complete(request)
        return ChatResponse(
            text=text, parsed=None, attempts=1, backend_id=self.backend.backend_id
        )

    def complete_structured(self, request: ChatRequest) -> ChatResponse:
        if request.schema_ref is None:
            raise ValueError("structured completion requires schema_ref")
        if request.schema_ref not in self.schemas:
            raise GatewayError(f"schema {request.schema_ref!r} not registered")
        current = request
        raw_outputs: list[str] = []
        for attempt in range(1, STRUCTURED_ATTEMPTS + 1):
            text = self.backend.complete(current)
            raw_outputs.append(text)
            try:
                parsed = extract_json(text)
                self.schemas.validate(request.schema_ref, parsed)
            except (ValueError, jsonschema.ValidationError) as exc:
                if attempt == STRUCTURED_ATTEMPTS:
                    raise SchemaViolationError(request.schema_ref, raw_outputs) from exc
                # The malformed reply goes back into the transcript so the
                # model can see what it got wrong; the correction prompt also
                # advances attempt_number() for scripted backends.
                current = current.extended(
                    Message("assistant", text),
                    Message("user", CORRECTION_PROMPT),
                )
                continue
            return ChatResponse(
                text=text,
                parsed=parsed,
                attempts=attempt,
                backend_id=self.backend.backend_id,
            )
        raise AssertionError("unreachable")

    def embed(self, text: str) -> np.ndarray:
        return self.embedder.embed(text)
