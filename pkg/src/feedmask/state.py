"""Materialized engine state and the event applier.

All mutation flows through apply_event, both live (after an append) and
during replay, so a state rebuilt from the log equals the live state
field for field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from feedmask.actions import ManagementAction
from feedmask.conversation import ConversationSession, SessionMessage
from feedmask.errors import UserMismatchError
from feedmask.filtering import FilterRecord, FilterRule
from feedmask.graph import PreferenceGraph, PreferenceProfile
from feedmask.pipeline import apply_effects


def _parse_counter(identifier: str, prefix: str) -> int:
    if identifier.startswith(prefix):
        try:
            return int(identifier[len(prefix):])
        except ValueError:
            return 0
    return 0


@dataclass
class EngineState:
    user_id: str
    graph: PreferenceGraph = field(default_factory=PreferenceGraph)
    profile_version: int = 0
    ingested: set[str] = field(default_factory=set)
    rules: list[FilterRule] = field(default_factory=list)
    actions: dict[str, ManagementAction] = field(default_factory=dict)
    sessions: dict[str, ConversationSession] = field(default_factory=dict)
    records: list[FilterRecord] = field(default_factory=list)
    # (ruleId, day) -> [processed, filtered]
    stats: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    rule_counter: int = 0
    action_counter: int = 0
    session_counter: int = 0
    skipped_pairs: int = 0

    # -- derived --------------------------------------------------------

    @property
    def profile(self) -> PreferenceProfile:
        return self.graph.band(self.graph.rank())

    def next_rule_id(self) -> str:
        return f"r{self.rule_counter + 1:06d}"

    def next_action_id(self) -> str:
        return f"a{self.action_counter + 1:06d}"

    def next_session_id(self) -> str:
        return f"s{self.session_counter + 1:06d}"

    def rule_by_id(self, rule_id: str) -> FilterRule | None:
        return next((r for r in self.rules if r.id == rule_id), None)

    # -- event application ------------------------------------------------

    def apply_event(self, envelope: dict) -> None:
        kind = envelope["kind"]
        payload = envelope["payload"]
        handler = getattr(self, f"_apply_{kind}", None)
        if handler is None:
            raise ValueError(f"no applier for event kind {kind!r}")
        handler(payload, envelope["timestamp"])

    def _apply_impression_ingested(self, payload: dict, timestamp: str) -> None:
        if payload["userId"] != self.user_id:
            raise UserMismatchError(
                f"event for user {payload['userId']!r} applied to {self.user_id!r}"
            )
        impression_id = payload["impressionId"]
        if impression_id in self.ingested:
            return
        apply_effects(self.graph, payload["effects"])
        self.ingested.add(impression_id)
        self.profile_version = payload["profileVersion"]
        self.skipped_pairs += len(payload["skipped"])

    def _apply_feed_filtered(self, payload: dict, timestamp: str) -> None:
        for doc in payload["records"]:
            self.records.append(FilterRecord.from_json(doc))
        for rule_id, day, processed, filtered in payload["counts"]:
            entry = self.stats.setdefault((rule_id, day), [0, 0])
            entry[0] += processed
            entry[1] += filtered

    def _register_rule(self, rule: FilterRule) -> None:
        self.rules.append(rule)
        self.rule_counter = max(self.rule_counter, _parse_counter(rule.id, "r"))

    def _replace_rule(self, rule: FilterRule) -> None:
        for k, existing in enumerate(self.rules):
            if existing.id == rule.id:
                self.rules[k] = rule
                return
        raise ValueError(f"rule {rule.id} not found")

    def _apply_rule_created(self, payload: dict, timestamp: str) -> None:
        self._register_rule(FilterRule.from_json(payload["rule"]))

    def _apply_rule_updated(self, payload: dict, timestamp: str) -> None:
        self._replace_rule(FilterRule.from_json(payload["rule"]))

    def _apply_rule_activated(self, payload: dict, timestamp: str) -> None:
        rule = self.rule_by_id(payload["ruleId"])
        if rule is None:
            raise ValueError(f"rule {payload['ruleId']} not found")
        rule.active = True

    def _apply_rule_deactivated(self, payload: dict, timestamp: str) -> None:
        rule = self.rule_by_id(payload["ruleId"])
        if rule is None:
            raise ValueError(f"rule {payload['ruleId']} not found")
        rule.active = False

    def _apply_rule_deleted(self, payload: dict, timestamp: str) -> None:
        before = len(self.rules)
        self.rules = [r for r in self.rules if r.id != payload["ruleId"]]
        if len(self.rules) == before:
            raise ValueError(f"rule {payload['ruleId']} not found")

    def _apply_action_proposed(self, payload: dict, timestamp: str) -> None:
        action = ManagementAction.from_json(payload["action"])
        self.actions[action.id] = action
        self.action_counter = max(self.action_counter, _parse_counter(action.id, "a"))

    def _apply_action_resolved(self, payload: dict, timestamp: str) -> None:
        action = self.actions.get(payload["actionId"])
        if action is None:
            raise ValueError(f"action {payload['actionId']} not found")
        action.status = payload["status"]
        if payload.get("finalText"):
            action.proposed_text = payload["finalText"]
        rule_doc = payload.get("rule")
        if rule_doc is not None:
            rule = FilterRule.from_json(rule_doc)
            if action.kind == "Add":
                self._register_rule(rule)
            else:
                self._replace_rule(rule)

    def _apply_conversation_opened(self, payload: dict, timestamp: str) -> None:
        session = ConversationSession.from_json(payload["session"])
        self.sessions[session.id] = session
        self.session_counter = max(self.session_counter, _parse_counter(session.id, "s"))

    def _apply_conversation_round(self, payload: dict, timestamp: str) -> None:
        session = self.sessions.get(payload["sessionId"])
        if session is None:
            raise ValueError(f"session {payload['sessionId']} not found")
        session.messages.append(SessionMessage("user", payload["userText"], timestamp))
        session.messages.append(SessionMessage("agent", payload["agentText"], timestamp))

    # -- snapshots --------------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "userId": self.user_id,
            "graph": self.graph.to_json(),
            "profileVersion": self.profile_version,
            "ingested": sorted(self.ingested),
            "rules": [r.to_json() for r in self.rules],
            "actions": [a.to_json() for a in self.actions.values()],
            "sessions": [s.to_json() for s in self.sessions.values()],
            "records": [r.to_json() for r in self.records],
            "stats": [
                [rule_id, day, entry[0], entry[1]]
                for (rule_id, day), entry in sorted(self.stats.items())
            ],
            "counters": {
                "rule": self.rule_counter,
                "action": self.action_counter,
                "session": self.session_counter,
            },
            "skippedPairs": self.skipped_pairs,
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> "EngineState":
        state = cls(user_id=doc["userId"])
        state.graph = PreferenceGraph.from_json(doc["graph"])
        state.profile_version = doc["profileVersion"]
        state.ingested = set(doc["ingested"])
        state.rules = [FilterRule.from_json(r) for r in doc["rules"]]
        state.actions = {
            a["id"]: ManagementAction.from_json(a) for a in doc["actions"]
        }
        state.sessions = {
            s["id"]: ConversationSession.from_json(s) for s in doc["sessions"]
        }
        state.records = [FilterRecord.from_json(r) for r in doc["records"]]
        state.stats = {
            (rule_id, day): [processed, filtered]
            for rule_id, day, processed, filtered in doc["stats"]
        }
        counters = doc["counters"]
        state.rule_counter = counters["rule"]
        state.action_counter = counters["action"]
        state.session_counter = counters["session"]
        state.skipped_pairs = doc.get("skippedPairs", 0)
        return state
