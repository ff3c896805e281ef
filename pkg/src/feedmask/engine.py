"""Single-user engine: wires the pipeline, filter, conversations and
actions to the event log.

Every use case follows the same shape: do the model work against copies,
append one or more events (durable before anything else sees them), then
mutate live state exclusively through EngineState.apply_event. With a
logical clock, a fixed seed, and a scripted gateway the whole event log
is byte-for-byte reproducible.
"""

from __future__ import annotations

import logging
import threading
from datetime import datetime, timedelta, timezone

import numpy as np

from feedmask.actions import (
    KIND_ADD,
    STATUS_PROPOSED,
    detect_need,
    propose_action,
    apply_action,
)
from feedmask.conversation import ConversationSession, open_session, respond
from feedmask.errors import ActionResolvedError, GatewayError, SessionClosedError
from feedmask.filtering import DecisionCache, FilterRule, FilterStats, filter_feed
from feedmask.pipeline import Impression, Item, ProfileView, plan_ingest
from feedmask.state import EngineState
from feedmask.store import EventLog

log = logging.getLogger(__name__)


class SystemClock:
    def now(self) -> str:
        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class LogicalClock:
    """Deterministic clock: starts at the epoch, advances 1s per reading."""

    def __init__(self, epoch: str = "2024-01-01T00:00:00Z"):
        self._base = datetime.strptime(epoch, "%Y-%m-%dT%H:%M:%SZ").replace(
            tzinfo=timezone.utc
        )
        self._ticks = 0

    def now(self) -> str:
        stamp = self._base + timedelta(seconds=self._ticks)
        self._ticks += 1
        return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


class Engine:
    def __init__(
        self,
        data_dir,
        gateway,
        user_id: str = "local",
        seed: int = 0,
        clock=None,
        filter_workers: int = 1,
    ):
        self.gateway = gateway
        self.clock = clock if clock is not None else SystemClock()
        self.rng = np.random.default_rng(seed)
        self.cache = DecisionCache()
        self.filter_workers = filter_workers
        self._lock = threading.RLock()

        self.store = EventLog(data_dir)
        snapshot_state, events = self.store.load()
        if snapshot_state is not None:
            self.state = EngineState.from_snapshot(snapshot_state)
        else:
            self.state = EngineState(user_id=user_id)
        for envelope in events:
            self.state.apply_event(envelope)

    def close(self) -> None:
        self.store.close()

    # -- internals ------------------------------------------------------

    def _commit(self, kind: str, payload: dict, timestamp: str) -> int:
        seq = self.store.append(kind, payload, timestamp)
        envelope = {"seq": seq, "kind": kind, "timestamp": timestamp, "payload": payload}
        self.state.apply_event(envelope)
        if self.store.snapshot_due():
            self.store.write_snapshot(self.state.to_snapshot())
        return seq

    # -- impressions ------------------------------------------------------

    def ingest_impression(self, impression: Impression) -> dict:
        with self._lock:
            if impression.impression_id in self.state.ingested:
                log.warning("impression %s already ingested", impression.impression_id)
                return {
                    "status": "duplicate",
                    "impressionId": impression.impression_id,
                    "profileVersion": self.state.profile_version,
                }
            view = ProfileView(self.state.profile_version, self.state.profile)
            plan = plan_ingest(
                self.state.graph,
                impression,
                self.gateway,
                self.rng,
                view,
                expected_user_id=self.state.user_id,
            )
            payload = {
                "impressionId": impression.impression_id,
                "userId": impression.user_id,
                "pairsSampled": plan.pairs_sampled,
                "pairsApplied": plan.pairs_applied,
                "skipped": plan.skipped,
                "effects": plan.effects,
                "extractions": plan.extractions,
                "profileVersion": self.state.profile_version + 1,
            }
            seq = self._commit("impression_ingested", payload, self.clock.now())
            return {
                "status": "ingested",
                "impressionId": impression.impression_id,
                "seq": seq,
                "pairsSampled": plan.pairs_sampled,
                "pairsApplied": plan.pairs_applied,
                "skipped": plan.skipped,
                "profileVersion": self.state.profile_version,
            }

    # -- filtering --------------------------------------------------------

    def filter_items(self, items: list[Item]) -> dict:
        with self._lock:
            timestamp = self.clock.now()
            result = filter_feed(
                items,
                self.state.rules,
                self.gateway,
                self.cache,
                timestamp,
                max_workers=self.filter_workers,
            )
            day = timestamp[:10]
            payload = {
                "day": day,
                "itemIds": [item.id for item in items],
                "keptIds": [item.id for item in result.kept],
                "records": [record.to_json() for record in result.records],
                "failures": result.failures,
                "counts": [
                    [rule_id, count_day, entry[0], entry[1]]
                    for (rule_id, count_day), entry in sorted(result.counts.items())
                ],
            }
            seq = self._commit("feed_filtered", payload, timestamp)
            return {
                "seq": seq,
                "kept": [item.to_json() for item in result.kept],
                "filtered": [record.to_json() for record in result.records],
                "failures": result.failures,
            }

    # -- rules --------------------------------------------------------------

    def create_rule(self, text: str, active: bool = True) -> FilterRule:
        with self._lock:
            timestamp = self.clock.now()
            rule = FilterRule(
                id=self.state.next_rule_id(),
                text=text,
                active=active,
                version=1,
                created_at=timestamp,
            )
            self._commit("rule_created", {"rule": rule.to_json(), "actionId": None}, timestamp)
            return rule

    def update_rule(self, rule_id: str, text: str) -> FilterRule:
        with self._lock:
            target = self.state.rule_by_id(rule_id)
            if target is None:
                raise KeyError(rule_id)
            updated = FilterRule(
                id=target.id,
                text=text,
                active=target.active,
                version=target.version + 1,
                created_at=target.created_at,
                history=[*target.history, target.text],
            )
            self._commit("rule_updated", {"rule": updated.to_json()}, self.clock.now())
            return updated

    def set_rule_active(self, rule_id: str, active: bool) -> FilterRule:
        with self._lock:
            target = self.state.rule_by_id(rule_id)
            if target is None:
                raise KeyError(rule_id)
            if target.active != active:
                kind = "rule_activated" if active else "rule_deactivated"
                self._commit(kind, {"ruleId": rule_id}, self.clock.now())
            return self.state.rule_by_id(rule_id)

    def delete_rule(self, rule_id: str) -> None:
        with self._lock:
            if self.state.rule_by_id(rule_id) is None:
                raise KeyError(rule_id)
            self._commit("rule_deleted", {"ruleId": rule_id}, self.clock.now())

    # -- conversations ------------------------------------------------------

    def open_conversation(self, strategy: str) -> dict:
        with self._lock:
            timestamp = self.clock.now()
            session = open_session(
                self.state.next_session_id(),
                strategy,
                timestamp,
                profile=self.state.profile,
                profile_version=self.state.profile_version,
                records=self.state.records,
            )
            self._commit("conversation_opened", {"session": session.to_json()}, timestamp)
            return self.state.sessions[session.id].to_json()

    def converse(self, session_id: str, user_text: str) -> dict:
        with self._lock:
            session = self.state.sessions.get(session_id)
            if session is None:
                raise KeyError(session_id)
            if session.status != "open":
                raise SessionClosedError(session_id)
            timestamp = self.clock.now()
            work = ConversationSession.from_json(session.to_json())
            agent = respond(work, user_text, self.state.profile, self.gateway, timestamp)
            round_index = work.rounds

            need = detect_need(user_text, agent.text, session_id, round_index, self.gateway)
            action = None
            if need is not None:
                try:
                    action = propose_action(
                        self.state.next_action_id(), need, self.state.rules, self.gateway
                    )
                except GatewayError as exc:
                    log.warning("action proposal failed for %s: %s", session_id, exc)

            self._commit(
                "conversation_round",
                {
                    "sessionId": session_id,
                    "userText": user_text,
                    "agentText": agent.text,
                    "round": round_index,
                    "need": need.to_json() if need else None,
                },
                timestamp,
            )
            if action is not None:
                self._commit("action_proposed", {"action": action.to_json()}, timestamp)
            return {
                "sessionId": session_id,
                "agentText": agent.text,
                "round": round_index,
                "need": need.to_json() if need else None,
                "action": action.to_json() if action else None,
            }

    # -- actions --------------------------------------------------------------

    def resolve_action(self, action_id: str, confirmed: bool, edited_text: str | None = None) -> dict:
        with self._lock:
            action = self.state.actions.get(action_id)
            if action is None:
                raise KeyError(action_id)
            if action.status != STATUS_PROPOSED:
                raise ActionResolvedError(f"action {action_id} already {action.status}")
            timestamp = self.clock.now()
            new_rule_id = None
            if confirmed and action.kind == KIND_ADD:
                new_rule_id = self.state.next_rule_id()
            _, resolved, touched = apply_action(
                self.state.rules,
                action,
                edited_text,
                confirmed,
                new_rule_id=new_rule_id,
                timestamp=timestamp,
            )
            payload = {
                "actionId": action_id,
                "status": resolved.status,
                "finalText": resolved.proposed_text if confirmed else None,
                "rule": touched.to_json() if touched else None,
            }
            self._commit("action_resolved", payload, timestamp)
            return {
                "action": self.state.actions[action_id].to_json(),
                "rule": touched.to_json() if touched else None,
            }

    # -- queries ---------------------------------------------------------------

    def profile_json(self) -> dict:
        with self._lock:
            return {
                "version": self.state.profile_version,
                "bands": self.state.profile.to_json(),
            }

    def graph_json(self) -> dict:
        with self._lock:
            doc = self.state.graph.to_json()
            doc["totalEdgeWeight"] = self.state.graph.total_edge_weight
            return doc

    def rules_json(self) -> list[dict]:
        with self._lock:
            return [rule.to_json() for rule in self.state.rules]

    def records_json(self, offset: int = 0, limit: int = 100) -> dict:
        with self._lock:
            page = self.state.records[offset : offset + limit]
            return {
                "total": len(self.state.records),
                "offset": offset,
                "records": [record.to_json() for record in page],
            }

    def stats_json(self) -> list[dict]:
        with self._lock:
            rows = []
            for (rule_id, day), (processed, filtered) in sorted(self.state.stats.items()):
                stats = FilterStats(rule_id, day, processed, filtered)
                rows.append(
                    {
                        "ruleId": rule_id,
                        "day": day,
                        "processed": processed,
                        "filtered": filtered,
                        "efficiency": stats.efficiency,
                    }
                )
            return rows

    def pending_actions_json(self) -> list[dict]:
        with self._lock:
            return [
                action.to_json()
                for action in self.state.actions.values()
                if action.status == STATUS_PROPOSED
            ]

    def session_json(self, session_id: str) -> dict:
        with self._lock:
            session = self.state.sessions.get(session_id)
            if session is None:
                raise KeyError(session_id)
            return session.to_json()
