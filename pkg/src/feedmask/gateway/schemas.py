"""Named JSON schemas for structured completions."""

from __future__ import annotations

import jsonschema

from feedmask.errors import GatewayError

_DEFAULTS: dict[str, dict] = {
    "topic_list": {
        "type": "object",
        "properties": {"topics": {"type": "array", "items": {"type": "string"}}},
        "required": ["topics"],
    },
    "filter_verdict": {
        "type": "object",
        "properties": {"filter": {"type": "boolean"}, "rationale": {"type": "string"}},
        "required": ["filter"],
    },
    "feature_list": {
        "type": "object",
        "properties": {"features": {"type": "array", "items": {"type": "string"}}},
        "required": ["features"],
    },
    "merge_verdict": {
        "type": "object",
        "properties": {
            "merge": {"type": "boolean"},
            "targets": {"type": "array", "items": {"type": "string"}},
        },
        "required": ["merge"],
    },
    "need_verdict": {
        "type": "object",
        "properties": {"found": {"type": "boolean"}, "need": {"type": "string"}},
        "required": ["found"],
    },
    "action_proposal": {
        "type": "object",
        "properties": {
            "kind": {"type": "string", "enum": ["add", "update"]},
            "target": {"type": ["string", "null"]},
            "text": {"type": "string", "minLength": 1},
        },
        "required": ["kind", "text"],
    },
}


class SchemaRegistry:
    def __init__(self, schemas: dict[str, dict] | None = None):
        self._schemas = dict(schemas or {})

    def register(self, name: str, schema: dict) -> None:
        self._schemas[name] = schema

    def __contains__(self, name: str) -> bool:
        return name in self._schemas

    def validate(self, name: str, payload: object) -> None:
        """Raises jsonschema.ValidationError on a bad payload."""
        schema = self._schemas.get(name)
        if schema is None:
            raise GatewayError(f"schema {name!r} not registered")
        jsonschema.validate(payload, schema)


def slate_choice_schema(k: int) -> dict:
    return {
        "type": "object",
        "properties": {"choice": {"type": "integer", "minimum": 0, "maximum": k - 1}},
        "required": ["choice"],
    }


def default_registry() -> SchemaRegistry:
    return SchemaRegistry(_DEFAULTS)
