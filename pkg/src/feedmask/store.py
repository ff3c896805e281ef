"""Append-only JSONL event log with periodic snapshots.

One JSON object per line, canonical key ordering, flushed and fsynced
before append returns. Recovery policy: a torn final line (crash mid
write) is dropped and truncated away with a warning; corruption anywhere
else refuses to start. Snapshots record the log byte offset so startup
replays at most one snapshot interval of events.
"""

from __future__ import annotations

import errno
import json
import logging
import os
from pathlib import Path

import jsonschema

from feedmask.errors import CorruptLogError, SchemaInvalidError, StorageFullError

log = logging.getLogger(__name__)

SNAPSHOT_INTERVAL = 500

_RULE_SHAPE = {
    "type": "object",
    "required": ["id", "text", "active", "version", "createdAt", "history"],
    "properties": {
        "id": {"type": "string"},
        "text": {"type": "string", "minLength": 1},
        "active": {"type": "boolean"},
        "version": {"type": "integer", "minimum": 1},
        "createdAt": {"type": "string"},
        "history": {"type": "array", "items": {"type": "string"}},
    },
}

_ACTION_SHAPE = {
    "type": "object",
    "required": ["id", "kind", "proposedText", "status"],
    "properties": {
        "id": {"type": "string"},
        "kind": {"type": "string", "enum": ["Add", "Update"]},
        "proposedText": {"type": "string", "minLength": 1},
        "status": {"type": "string", "enum": ["proposed", "confirmed", "rejected"]},
    },
}

_SESSION_SHAPE = {
    "type": "object",
    "required": ["id", "strategy", "messages", "contextSnapshot", "status"],
}

EVENT_SCHEMAS: dict[str, dict] = {
    "impression_ingested": {
        "type": "object",
        "required": [
            "impressionId", "userId", "pairsSampled", "pairsApplied",
            "skipped", "effects", "profileVersion",
        ],
        "properties": {
            "impressionId": {"type": "string", "minLength": 1},
            "userId": {"type": "string", "minLength": 1},
            "pairsSampled": {"type": "integer", "minimum": 0},
            "pairsApplied": {"type": "integer", "minimum": 0},
            "skipped": {"type": "array"},
            "effects": {"type": "array", "items": {"type": "object", "required": ["op"]}},
            "profileVersion": {"type": "integer", "minimum": 1},
        },
    },
    "feed_filtered": {
        "type": "object",
        "required": ["day", "itemIds", "keptIds", "records", "failures", "counts"],
        "properties": {
            "day": {"type": "string"},
            "itemIds": {"type": "array", "items": {"type": "string"}},
            "keptIds": {"type": "array", "items": {"type": "string"}},
            "records": {"type": "array"},
            "failures": {"type": "array"},
            "counts": {
                "type": "array",
                "items": {
                    "type": "array",
                    "prefixItems": [
                        {"type": "string"}, {"type": "string"},
                        {"type": "integer"}, {"type": "integer"},
                    ],
                    "minItems": 4,
                    "maxItems": 4,
                },
            },
        },
    },
    "rule_created": {
        "type": "object",
        "required": ["rule"],
        "properties": {"rule": _RULE_SHAPE, "actionId": {"type": ["string", "null"]}},
    },
    "rule_updated": {
        "type": "object",
        "required": ["rule"],
        "properties": {"rule": _RULE_SHAPE},
    },
    "rule_activated": {
        "type": "object",
        "required": ["ruleId"],
        "properties": {"ruleId": {"type": "string"}},
    },
    "rule_deactivated": {
        "type": "object",
        "required": ["ruleId"],
        "properties": {"ruleId": {"type": "string"}},
    },
    "rule_deleted": {
        "type": "object",
        "required": ["ruleId"],
        "properties": {"ruleId": {"type": "string"}},
    },
    "action_proposed": {
        "type": "object",
        "required": ["action"],
        "properties": {"action": _ACTION_SHAPE},
    },
    "action_resolved": {
        "type": "object",
        "required": ["actionId", "status"],
        "properties": {
            "actionId": {"type": "string"},
            "status": {"type": "string", "enum": ["confirmed", "rejected"]},
            "finalText": {"type": ["string", "null"]},
            "rule": {"anyOf": [_RULE_SHAPE, {"type": "null"}]},
        },
    },
    "conversation_opened": {
        "type": "object",
        "required": ["session"],
        "properties": {"session": _SESSION_SHAPE},
    },
    "conversation_round": {
        "type": "object",
        "required": ["sessionId", "userText", "agentText", "round"],
        "properties": {
            "sessionId": {"type": "string"},
            "userText": {"type": "string", "minLength": 1},
            "agentText": {"type": "string", "minLength": 1},
            "round": {"type": "integer", "minimum": 1},
            "need": {"type": ["object", "null"]},
        },
    },
}


def canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class EventLog:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.log_path = self.data_dir / "events.log"
        self.snapshot_dir = self.data_dir / "snapshots"
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.snapshot_dir.mkdir(exist_ok=True)
        self._handle = None
        self.last_seq = 0

    # -- append -------------------------------------------------------

    def _open_for_append(self):
        if self._handle is None:
            self._handle = open(self.log_path, "ab")
        return self._handle

    def append(self, kind: str, payload: dict, timestamp: str) -> int:
        schema = EVENT_SCHEMAS.get(kind)
        if schema is None:
            raise SchemaInvalidError(f"unknown event kind {kind!r}")
        try:
            jsonschema.validate(payload, schema)
        except jsonschema.ValidationError as exc:
            raise SchemaInvalidError(f"{kind}: {exc.message}") from exc

        envelope = {
            "seq": self.last_seq + 1,
            "kind": kind,
            "timestamp": timestamp,
            "payload": payload,
        }
        line = canonical(envelope).encode("utf-8") + b"\n"
        handle = self._open_for_append()
        try:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFullError("event log volume is full") from exc
            raise
        self.last_seq += 1
        return self.last_seq

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    # -- snapshots ------------------------------------------------------

    def snapshot_due(self) -> bool:
        return self.last_seq > 0 and self.last_seq % SNAPSHOT_INTERVAL == 0

    def write_snapshot(self, state_doc: dict) -> Path:
        handle = self._open_for_append()
        handle.flush()
        offset = handle.tell()
        doc = {"upToSeq": self.last_seq, "logOffset": offset, "state": state_doc}
        path = self.snapshot_dir / f"{self.last_seq:08d}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(canonical(doc), encoding="utf-8")
        os.replace(tmp, path)
        return path

    def latest_snapshot(self) -> dict | None:
        candidates = sorted(self.snapshot_dir.glob("[0-9]" * 8 + ".json"))
        if not candidates:
            return None
        path = candidates[-1]
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise CorruptLogError(f"snapshot {path.name} is unreadable: {exc}") from exc

    # -- load -----------------------------------------------------------

    def load(self) -> tuple[dict | None, list[dict]]:
        """Returns (latest snapshot state doc or None, events after it).

        Sets self.last_seq. Truncates a torn final line off the log file.
        """
        self.close()
        snapshot = self.latest_snapshot()
        base_seq = snapshot["upToSeq"] if snapshot else 0
        offset = snapshot["logOffset"] if snapshot else 0

        events: list[dict] = []
        if self.log_path.exists():
            raw = self.log_path.read_bytes()
            if offset > len(raw):
                raise CorruptLogError(
                    f"log is shorter ({len(raw)} bytes) than the snapshot offset ({offset})"
                )
            events = self._parse(raw, offset, base_seq)
        elif snapshot is not None:
            raise CorruptLogError("snapshot exists but events.log is missing")

        self.last_seq = events[-1]["seq"] if events else base_seq
        return (snapshot["state"] if snapshot else None), events

    def _parse(self, raw: bytes, offset: int, base_seq: int) -> list[dict]:
        events = []
        expected = base_seq + 1
        pos = offset
        end = len(raw)
        while pos < end:
            newline = raw.find(b"\n", pos)
            if newline == -1:
                # unterminated tail: the append (write+fsync of line+\n)
                # never completed, so the record was not durable anyway
                log.warning(
                    "dropping torn final record (%d bytes) from %s",
                    end - pos, self.log_path,
                )
                self._truncate(pos)
                break
            line = raw[pos:newline]
            try:
                doc = json.loads(line)
                seq = doc["seq"]
            except (ValueError, KeyError, TypeError) as exc:
                if raw.find(b"\n", newline + 1) == -1 and newline + 1 >= end:
                    log.warning("dropping torn final line of %s", self.log_path)
                    self._truncate(pos)
                    break
                raise CorruptLogError(
                    f"unreadable interior record at byte {pos}: {exc}"
                ) from exc
            if seq != expected:
                raise CorruptLogError(f"expected seq {expected}, found {seq} at byte {pos}")
            events.append(doc)
            expected += 1
            pos = newline + 1
        return events

    def _truncate(self, length: int) -> None:
        with open(self.log_path, "r+b") as handle:
            handle.truncate(length)
