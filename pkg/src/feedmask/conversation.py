"""Conversational needs discovery.

Two session kinds: one opens by explaining the preference profile, the
other by explaining recent filtering records. Every completed round
(user message + agent reply) is handed to a callback exactly once so the
action workflow can mine it for filtering needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from feedmask.errors import GatewayError, NoSnapshotError, SessionClosedError
from feedmask.filtering import FilterRecord
from feedmask.gateway import ChatRequest, Message, render
from feedmask.gateway.templates import SYSTEM_PROMPT
from feedmask.graph import PreferenceProfile
from feedmask.pipeline import format_bands

REPLY_KEY = "conversation/reply"

STRATEGY_PROFILE = "ProfileExplanation"
STRATEGY_RECORDS = "RecordExplanation"
STRATEGIES = (STRATEGY_PROFILE, STRATEGY_RECORDS)

RECORD_WINDOW = 50

APOLOGY = (
    "Sorry, I could not produce a proper reply just now. "
    "Please say that again or try once more in a moment."
)


@dataclass
class SessionMessage:
    speaker: str  # "agent" | "user"
    text: str
    timestamp: str

    def to_json(self) -> dict:
        return {"speaker": self.speaker, "text": self.text, "timestamp": self.timestamp}

    @classmethod
    def from_json(cls, doc: dict) -> "SessionMessage":
        return cls(doc["speaker"], doc["text"], doc["timestamp"])


@dataclass
class ConversationSession:
    id: str
    strategy: str
    messages: list[SessionMessage] = field(default_factory=list)
    context_snapshot: dict = field(default_factory=dict)
    status: str = "open"

    @property
    def rounds(self) -> int:
        """Completed user+agent rounds (the opening message is round 0)."""
        return sum(1 for m in self.messages if m.speaker == "user")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "strategy": self.strategy,
            "messages": [m.to_json() for m in self.messages],
            "contextSnapshot": self.context_snapshot,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ConversationSession":
        return cls(
            id=doc["id"],
            strategy=doc["strategy"],
            messages=[SessionMessage.from_json(m) for m in doc["messages"]],
            context_snapshot=doc["contextSnapshot"],
            status=doc["status"],
        )


def _render_records(records: list[FilterRecord]) -> str:
    lines = []
    for record in records:
        rationale = record.decision.rationale or "matched the rule's topics"
        lines.append(f"- item {record.item_id} (rule {record.matched_rule_id}): {rationale}")
    return "\n".join(lines)


def opening_message(
    strategy: str,
    profile: PreferenceProfile | None = None,
    profile_version: int = 0,
    records: list[FilterRecord] | None = None,
) -> tuple[str, dict]:
    """Render the agent's opening and the context snapshot it describes."""
    if strategy == STRATEGY_PROFILE:
        if profile is None:
            raise NoSnapshotError("no preference profile available yet")
        note = "" if profile.labels else "The profile is empty so far; it fills in as you use your feed. "
        text = render("opening_profile", bands=format_bands(profile), note=note)
        snapshot = {"profileVersion": profile_version, "bands": profile.to_json()}
        return text, snapshot
    if strategy == STRATEGY_RECORDS:
        window = list(records or [])[-RECORD_WINDOW:]
        snapshot = {"records": [r.to_json() for r in window]}
        if not window:
            return render("opening_records_empty"), snapshot
        return render("opening_records", records=_render_records(window)), snapshot
    raise ValueError(f"unknown strategy {strategy!r}")


def open_session(
    session_id: str,
    strategy: str,
    timestamp: str,
    profile: PreferenceProfile | None = None,
    profile_version: int = 0,
    records: list[FilterRecord] | None = None,
) -> ConversationSession:
    text, snapshot = opening_message(strategy, profile, profile_version, records)
    session = ConversationSession(id=session_id, strategy=strategy, context_snapshot=snapshot)
    session.messages.append(SessionMessage("agent", text, timestamp))
    return session


def _render_context(session: ConversationSession) -> str:
    if session.strategy == STRATEGY_PROFILE:
        return (
            "Context: the session opened by explaining the user's preference "
            f"profile (version {session.context_snapshot.get('profileVersion', 0)})."
        )
    count = len(session.context_snapshot.get("records", []))
    return (
        "Context: the session opened by explaining the user's recent "
        f"filtering records ({count} shown)."
    )


def _render_transcript(session: ConversationSession) -> str:
    names = {"agent": "Assistant", "user": "User"}
    return "\n".join(f"{names[m.speaker]}: {m.text}" for m in session.messages)


def respond(
    session: ConversationSession,
    user_text: str,
    profile: PreferenceProfile,
    gateway,
    timestamp: str,
    on_round=None,
) -> SessionMessage:
    """Append the user message, produce the agent reply, forward the round.

    A gateway failure still records the round with a fixed apology reply,
    so the forwarding guarantee (exactly once per round) holds regardless.
    """
    if session.status != "open":
        raise SessionClosedError(session.id)
    if not user_text.strip():
        raise ValueError("user message is empty")

    session.messages.append(SessionMessage("user", user_text, timestamp))
    prompt = render(
        "reply",
        context=_render_context(session),
        bands=format_bands(profile),
        transcript=_render_transcript(session),
    )
    request = ChatRequest(
        messages=[Message("system", SYSTEM_PROMPT), Message("user", prompt)],
        script_key=REPLY_KEY,
    )
    try:
        reply_text = gateway.complete(request).text.strip() or APOLOGY
    except GatewayError:
        reply_text = APOLOGY
    agent_message = SessionMessage("agent", reply_text, timestamp)
    session.messages.append(agent_message)

    if on_round is not None:
        on_round(session, user_text, reply_text)
    return agent_message
