"""Rule matching and feed partitioning.

A rule match runs a three-turn conversation with the model: item topics,
then rule topics, then the verdict. All three turns share one transcript so
the verdict can only draw on what the conversation surfaced. Decisions are
cached by (item, rule, rule version); an edit to a rule bumps its version
and so forces re-evaluation. Gateway failures never block an item: the
filter fails open and the failure is reported alongside the results.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from feedmask.errors import DecisionUnavailableError, GatewayError
from feedmask.gateway import ChatRequest, Message, render
from feedmask.gateway.templates import SYSTEM_PROMPT
from feedmask.pipeline import Item

FILTER_KEY = "filter/v1"


@dataclass
class FilterRule:
    id: str
    text: str
    active: bool
    version: int
    created_at: str
    history: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.text:
            raise ValueError("rule text is empty")
        if self.version != 1 + len(self.history):
            raise ValueError(
                f"rule {self.id}: version {self.version} != 1 + {len(self.history)} history entries"
            )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "active": self.active,
            "version": self.version,
            "createdAt": self.created_at,
            "history": list(self.history),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FilterRule":
        return cls(
            id=doc["id"],
            text=doc["text"],
            active=doc["active"],
            version=doc["version"],
            created_at=doc["createdAt"],
            history=list(doc["history"]),
        )


@dataclass
class FilterDecision:
    item_id: str
    rule_id: str
    rule_version: int
    matched: bool
    item_topics: list[str]
    rule_topics: list[str]
    rationale: str
    timestamp: str

    def to_json(self) -> dict:
        return {
            "itemId": self.item_id,
            "ruleId": self.rule_id,
            "ruleVersion": self.rule_version,
            "matched": self.matched,
            "itemTopics": list(self.item_topics),
            "ruleTopics": list(self.rule_topics),
            "rationale": self.rationale,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FilterDecision":
        return cls(
            item_id=doc["itemId"],
            rule_id=doc["ruleId"],
            rule_version=doc["ruleVersion"],
            matched=doc["matched"],
            item_topics=list(doc["itemTopics"]),
            rule_topics=list(doc["ruleTopics"]),
            rationale=doc["rationale"],
            timestamp=doc["timestamp"],
        )


@dataclass
class FilterRecord:
    item_id: str
    matched_rule_id: str
    decision: FilterDecision
    day: str

    def to_json(self) -> dict:
        return {
            "itemId": self.item_id,
            "matchedRuleId": self.matched_rule_id,
            "decision": self.decision.to_json(),
            "day": self.day,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FilterRecord":
        return cls(
            item_id=doc["itemId"],
            matched_rule_id=doc["matchedRuleId"],
            decision=FilterDecision.from_json(doc["decision"]),
            day=doc["day"],
        )


@dataclass
class FilterStats:
    rule_id: str
    day: str
    processed: int
    filtered: int

    def __post_init__(self):
        if not 0 <= self.filtered <= self.processed:
            raise ValueError(f"stats out of range: {self.filtered}/{self.processed}")

    @property
    def efficiency(self) -> float | None:
        if self.processed == 0:
            return None
        return self.filtered / self.processed


class DecisionCache:
    """(itemId, ruleId, ruleVersion) -> FilterDecision; safe under
    concurrent insert. Failures are never cached."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str, int], FilterDecision] = {}

    def get(self, item_id: str, rule_id: str, rule_version: int) -> FilterDecision | None:
        with self._lock:
            return self._entries.get((item_id, rule_id, rule_version))

    def put(self, decision: FilterDecision) -> None:
        with self._lock:
            self._entries[(decision.item_id, decision.rule_id, decision.rule_version)] = decision

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def match_rule(
    item: Item,
    rule: FilterRule,
    gateway,
    cache: DecisionCache | None = None,
    timestamp: str = "",
) -> FilterDecision:
    if cache is not None:
        hit = cache.get(item.id, rule.id, rule.version)
        if hit is not None:
            return hit

    transcript = [Message("system", SYSTEM_PROMPT)]

    def turn(prompt: str, schema_ref: str):
        transcript.append(Message("user", prompt))
        request = ChatRequest(
            messages=list(transcript), schema_ref=schema_ref, script_key=FILTER_KEY
        )
        reply = gateway.complete_structured(request)
        transcript.append(Message("assistant", reply.text))
        return reply.parsed

    try:
        item_topics = turn(
            render("filter_item_topics", title=item.title, summary=item.summary or "(none)"),
            "topic_list",
        )["topics"]
        rule_topics = turn(render("filter_rule_topics", rule=rule.text), "topic_list")["topics"]
        verdict = turn(render("filter_verdict"), "filter_verdict")
    except GatewayError as exc:
        raise DecisionUnavailableError(
            f"no verdict for item {item.id} under rule {rule.id}: {exc}"
        ) from exc

    decision = FilterDecision(
        item_id=item.id,
        rule_id=rule.id,
        rule_version=rule.version,
        matched=bool(verdict["filter"]),
        item_topics=list(item_topics),
        rule_topics=list(rule_topics),
        rationale=verdict.get("rationale", ""),
        timestamp=timestamp,
    )
    if cache is not None:
        cache.put(decision)
    return decision


@dataclass
class FeedResult:
    kept: list[Item]
    records: list[FilterRecord]
    failures: list[dict]
    # (ruleId, day) -> [processed, filtered]; only decided evaluations count
    counts: dict[tuple[str, str], list[int]]


def _evaluate_item(item, ordered_rules, gateway, cache, timestamp, day):
    decisions = []
    failures = []
    matched: FilterDecision | None = None
    for rule in ordered_rules:
        try:
            decision = match_rule(item, rule, gateway, cache, timestamp)
        except DecisionUnavailableError as exc:
            failures.append({"itemId": item.id, "ruleId": rule.id, "error": str(exc)})
            continue
        decisions.append(decision)
        if decision.matched:
            matched = decision
            break
    return decisions, failures, matched


def filter_feed(
    items: list[Item],
    rules: list[FilterRule],
    gateway,
    cache: DecisionCache | None = None,
    timestamp: str = "",
    max_workers: int = 1,
) -> FeedResult:
    """Partition items into kept and filtered under the active rules.

    Active rules run in creation order and stop at the first match; an item
    no active rule matches is kept. Items may be evaluated in parallel, the
    output is assembled in input order either way.
    """
    day = timestamp[:10]
    ordered = sorted(
        (r for r in rules if r.active), key=lambda r: (r.created_at, r.id)
    )
    if not ordered:
        return FeedResult(kept=list(items), records=[], failures=[], counts={})

    if max_workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            evaluated = list(
                pool.map(
                    lambda item: _evaluate_item(item, ordered, gateway, cache, timestamp, day),
                    items,
                )
            )
    else:
        evaluated = [
            _evaluate_item(item, ordered, gateway, cache, timestamp, day) for item in items
        ]

    kept: list[Item] = []
    records: list[FilterRecord] = []
    failures: list[dict] = []
    counts: dict[tuple[str, str], list[int]] = {}
    for item, (decisions, item_failures, matched) in zip(items, evaluated):
        failures.extend(item_failures)
        for decision in decisions:
            entry = counts.setdefault((decision.rule_id, day), [0, 0])
            entry[0] += 1
            if decision.matched:
                entry[1] += 1
        if matched is None:
            kept.append(item)
        else:
            records.append(
                FilterRecord(
                    item_id=item.id, matched_rule_id=matched.rule_id, decision=matched, day=day
                )
            )
    return FeedResult(kept=kept, records=records, failures=failures, counts=counts)


def filtering_efficiency(
    records: list[FilterRecord],
    processed_counts: dict[tuple[str, str], int],
    rule_id: str,
    day: str,
) -> float | None:
    """n/N for one rule-day; None when nothing was processed (N = 0)."""
    n_processed = processed_counts.get((rule_id, day), 0)
    if n_processed == 0:
        return None
    n_filtered = sum(
        1 for r in records if r.matched_rule_id == rule_id and r.day == day
    )
    return n_filtered / n_processed
