"""Candidate rule generation: mine conversation rounds for filtering
needs, propose Add/Update actions against the existing rule set, and
apply user-confirmed edits.

An action captures the target rule's version at proposal time; if the
rule was edited or deleted before confirmation the apply step refuses
with a stale-action error instead of silently clobbering the edit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from feedmask.errors import GatewayError, StaleActionError
from feedmask.filtering import FilterRule
from feedmask.gateway import ChatRequest, Message, render
from feedmask.gateway.templates import SYSTEM_PROMPT

log = logging.getLogger(__name__)

DETECT_KEY = "actions/detect"
PROPOSE_KEY = "actions/propose"

KIND_ADD = "Add"
KIND_UPDATE = "Update"

STATUS_PROPOSED = "proposed"
STATUS_CONFIRMED = "confirmed"
STATUS_REJECTED = "rejected"

# rules listed in a proposal prompt are capped to bound prompt size
PROPOSAL_RULE_LIMIT = 50


@dataclass
class FilteringNeed:
    text: str
    source_session_id: str
    source_round: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("need text is empty")

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "sourceSessionId": self.source_session_id,
            "sourceRound": self.source_round,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FilteringNeed":
        return cls(doc["text"], doc["sourceSessionId"], doc["sourceRound"])


@dataclass
class ManagementAction:
    id: str
    kind: str  # Add | Update
    proposed_text: str
    status: str = STATUS_PROPOSED
    source_need: FilteringNeed | None = None
    target_rule_id: str | None = None
    target_rule_version: int | None = None
    duplicate_of: str | None = None

    def __post_init__(self):
        if self.kind not in (KIND_ADD, KIND_UPDATE):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == KIND_UPDATE and not self.target_rule_id:
            raise ValueError("Update action requires a target rule")
        if not self.proposed_text.strip():
            raise ValueError("proposed text is empty")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "proposedText": self.proposed_text,
            "status": self.status,
            "sourceNeed": self.source_need.to_json() if self.source_need else None,
            "targetRuleId": self.target_rule_id,
            "targetRuleVersion": self.target_rule_version,
            "duplicateOf": self.duplicate_of,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ManagementAction":
        need = doc.get("sourceNeed")
        return cls(
            id=doc["id"],
            kind=doc["kind"],
            proposed_text=doc["proposedText"],
            status=doc["status"],
            source_need=FilteringNeed.from_json(need) if need else None,
            target_rule_id=doc.get("targetRuleId"),
            target_rule_version=doc.get("targetRuleVersion"),
            duplicate_of=doc.get("duplicateOf"),
        )


def _chat(script_key: str, prompt: str, schema_ref: str) -> ChatRequest:
    return ChatRequest(
        messages=[Message("system", SYSTEM_PROMPT), Message("user", prompt)],
        schema_ref=schema_ref,
        script_key=script_key,
    )


def detect_need(
    user_text: str,
    agent_text: str,
    session_id: str,
    round_index: int,
    gateway,
) -> FilteringNeed | None:
    """Mine one completed round for a filtering need; None when there is
    none or the gateway fails (the conversation just continues)."""
    prompt = render("detect_need", user=user_text, agent=agent_text)
    try:
        reply = gateway.complete_structured(_chat(DETECT_KEY, prompt, "need_verdict"))
    except GatewayError as exc:
        log.warning("need detection failed for session %s round %d: %s", session_id, round_index, exc)
        return None
    verdict = reply.parsed
    if not verdict["found"]:
        return None
    text = (verdict.get("need") or "").strip()
    if not text:
        return None
    return FilteringNeed(text=text, source_session_id=session_id, source_round=round_index)


def _normalize(text: str) -> str:
    return " ".join(text.casefold().split()).strip(".")


def propose_action(
    action_id: str,
    need: FilteringNeed,
    rules: list[FilterRule],
    gateway,
) -> ManagementAction:
    """Turn a need into a proposed Add or Update against the rule set."""
    active = [r for r in rules if r.active]
    duplicate = next((r for r in active if _normalize(r.text) == _normalize(need.text)), None)
    if duplicate is not None:
        return ManagementAction(
            id=action_id,
            kind=KIND_UPDATE,
            proposed_text=duplicate.text,
            source_need=need,
            target_rule_id=duplicate.id,
            target_rule_version=duplicate.version,
            duplicate_of=duplicate.id,
        )

    if not rules:
        return ManagementAction(
            id=action_id, kind=KIND_ADD, proposed_text=need.text, source_need=need
        )

    listed = sorted(rules, key=lambda r: (r.created_at, r.id))[:PROPOSAL_RULE_LIMIT]
    catalog = "\n".join(f"- {r.id}: {r.text}" for r in listed)
    prompt = render("propose_action", need=need.text, rules=catalog)
    reply = gateway.complete_structured(_chat(PROPOSE_KEY, prompt, "action_proposal"))
    proposal = reply.parsed

    if proposal["kind"] == "update":
        target = next((r for r in listed if r.id == proposal.get("target")), None)
        if target is None:
            log.warning(
                "proposal named unknown rule %r; falling back to Add", proposal.get("target")
            )
        else:
            return ManagementAction(
                id=action_id,
                kind=KIND_UPDATE,
                proposed_text=proposal["text"],
                source_need=need,
                target_rule_id=target.id,
                target_rule_version=target.version,
            )
    return ManagementAction(
        id=action_id, kind=KIND_ADD, proposed_text=proposal["text"], source_need=need
    )


def apply_action(
    rules: list[FilterRule],
    action: ManagementAction,
    edited_text: str | None,
    confirmed: bool,
    new_rule_id: str | None = None,
    timestamp: str = "",
) -> tuple[list[FilterRule], ManagementAction, FilterRule | None]:
    """Apply a user's verdict on a proposed action.

    Returns (rules', resolved action, touched rule or None). The input
    list is not mutated. Confirmation with a stale target (version drift
    or deletion) raises StaleActionError and leaves the action proposed.
    """
    if action.status != STATUS_PROPOSED:
        raise ValueError(f"action {action.id} already {action.status}")

    if not confirmed:
        resolved = ManagementAction.from_json(action.to_json())
        resolved.status = STATUS_REJECTED
        return list(rules), resolved, None

    text = (edited_text if edited_text is not None else action.proposed_text).strip()
    if not text:
        raise ValueError("confirmed action needs non-empty text")

    resolved = ManagementAction.from_json(action.to_json())
    resolved.proposed_text = text
    resolved.status = STATUS_CONFIRMED

    if action.kind == KIND_ADD:
        if not new_rule_id:
            raise ValueError("confirmed Add needs a new rule id")
        rule = FilterRule(
            id=new_rule_id, text=text, active=True, version=1, created_at=timestamp
        )
        return [*rules, rule], resolved, rule

    target = next((r for r in rules if r.id == action.target_rule_id), None)
    if target is None:
        raise StaleActionError(f"rule {action.target_rule_id} no longer exists")
    if action.target_rule_version is not None and target.version != action.target_rule_version:
        raise StaleActionError(
            f"rule {target.id} is at version {target.version}, "
            f"action was proposed against version {action.target_rule_version}"
        )
    updated = FilterRule(
        id=target.id,
        text=text,
        active=target.active,
        version=target.version + 1,
        created_at=target.created_at,
        history=[*target.history, target.text],
    )
    new_rules = [updated if r.id == target.id else r for r in rules]
    return new_rules, resolved, updated


def acceptance_rate(actions: list[ManagementAction]) -> float | None:
    """confirmed / proposed, over every action ever proposed; None when
    no action has been proposed yet."""
    if not actions:
        return None
    confirmed = sum(1 for a in actions if a.status == STATUS_CONFIRMED)
    return confirmed / len(actions)
