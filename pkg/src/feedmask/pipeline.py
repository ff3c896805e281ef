"""Impression-to-graph pipeline.

Each impression becomes <pos, neg> pairs; a perceive step narrates why the
user clicked one and skipped the other, a summarize step distills feature
labels from those narrations, and a reflect step folds the labels into the
preference graph (merging near-duplicates) and adds one neg->pos edge per
ordered feature pair.

Planning never mutates the caller's graph: plan_ingest works on a copy and
returns the ordered effect ops. apply_effects replays those ops onto a real
graph, which is the only mutation path, so replaying the recorded event
reproduces the state by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from feedmask.errors import (
    ExtractionEmptyError,
    GatewayError,
    UserMismatchError,
)
from feedmask.gateway import ChatRequest, Message, render
from feedmask.gateway.templates import SYSTEM_PROMPT
from feedmask.graph import BAND_NAMES, PreferenceGraph, PreferenceProfile, normalize_label

PERCEIVE_KEY = "perceive/v1"
SUMMARY_KEY = "summary/v1"
MERGE_KEY = "reflect/merge"

SIMILARITY_THRESHOLD = 0.85
SHORTLIST_LIMIT = 8

CLICKED = "clicked"
IGNORED = "did not click"


@dataclass
class Item:
    id: str
    title: str
    summary: str = ""
    category: str | None = None
    raw: dict | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("item id is empty")
        if not self.title:
            raise ValueError("item title is empty")

    def to_json(self) -> dict:
        doc = {"id": self.id, "title": self.title, "summary": self.summary}
        if self.category is not None:
            doc["category"] = self.category
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Item":
        return cls(
            id=doc["id"],
            title=doc["title"],
            summary=doc.get("summary", ""),
            category=doc.get("category"),
            raw=doc.get("raw"),
        )


@dataclass
class Impression:
    impression_id: str
    user_id: str
    timestamp: str
    displayed: list[tuple[Item, bool]]

    def __post_init__(self):
        if not self.impression_id:
            raise ValueError("impressionId is empty")
        if not self.user_id:
            raise ValueError("userId is empty")
        if not self.displayed:
            raise ValueError("displayed list is empty")

    @classmethod
    def from_json(cls, doc: dict) -> "Impression":
        displayed = [
            (Item.from_json(entry["item"]), bool(entry["clicked"]))
            for entry in doc["displayed"]
        ]
        return cls(
            impression_id=doc["impressionId"],
            user_id=doc["userId"],
            timestamp=doc.get("timestamp", ""),
            displayed=displayed,
        )


@dataclass
class InteractionPair:
    pos: Item
    neg: Item
    impression_id: str
    timestamp: str

    def __post_init__(self):
        if self.pos.id == self.neg.id:
            raise ValueError("pos and neg are the same item")


@dataclass
class PerceptionReport:
    pos_reasons: str
    neg_reasons: str
    profile_snapshot_version: int


@dataclass
class FeatureExtraction:
    pos_features: list[str]
    neg_features: list[str]

    @property
    def ordered_pairs(self) -> list[tuple[str, str]]:
        return [(p, n) for p in self.pos_features for n in self.neg_features]


@dataclass
class ProfileView:
    """Banded profile plus the version it was computed at."""

    version: int
    profile: PreferenceProfile


@dataclass
class IngestPlan:
    impression_id: str
    pairs_sampled: int
    pairs_applied: int
    skipped: list[dict]
    effects: list[dict]
    graph: PreferenceGraph
    extractions: list[dict] = field(default_factory=list)


def format_bands(profile: PreferenceProfile) -> str:
    lines = []
    for name, band in zip(BAND_NAMES, profile.bands):
        lines.append(f"{name}: {'; '.join(band) if band else '(none)'}")
    return "\n".join(lines)


def _chat(script_key: str, prompt: str, schema_ref: str | None = None) -> ChatRequest:
    return ChatRequest(
        messages=[Message("system", SYSTEM_PROMPT), Message("user", prompt)],
        schema_ref=schema_ref,
        script_key=script_key,
    )


def sample_pairs(impression: Impression, rng) -> list[InteractionPair]:
    clicked = [item for item, was_clicked in impression.displayed if was_clicked]
    unclicked = [item for item, was_clicked in impression.displayed if not was_clicked]
    if not clicked or not unclicked:
        return []
    pairs = []
    for pos in clicked:
        neg = unclicked[int(rng.integers(len(unclicked)))]
        pairs.append(InteractionPair(pos, neg, impression.impression_id, impression.timestamp))
    return pairs


def perceive(pair: InteractionPair, view: ProfileView, gateway) -> PerceptionReport:
    bands = format_bands(view.profile)
    reasons = {}
    for item, interaction, slot in (
        (pair.pos, CLICKED, "pos"),
        (pair.neg, IGNORED, "neg"),
    ):
        prompt = render("perceive", bands=bands, title=item.title, interaction=interaction)
        reply = gateway.complete(_chat(PERCEIVE_KEY, prompt))
        if not reply.text.strip():
            raise GatewayError(f"perceive returned blank reasons for {item.id}")
        reasons[slot] = reply.text.strip()
    return PerceptionReport(
        pos_reasons=reasons["pos"],
        neg_reasons=reasons["neg"],
        profile_snapshot_version=view.version,
    )


def _dedupe(labels: list[str]) -> list[str]:
    # case/whitespace duplicates would double-count edges in the m*n product
    seen = set()
    out = []
    for label in labels:
        key = normalize_label(label)
        if not key or key in seen:
            continue
        seen.add(key)
        out.append(label.strip())
    return out


def summarize(pair: InteractionPair, report: PerceptionReport, gateway) -> FeatureExtraction:
    sides = {}
    for item, interaction, reasons, slot in (
        (pair.pos, CLICKED, report.pos_reasons, "pos"),
        (pair.neg, IGNORED, report.neg_reasons, "neg"),
    ):
        prompt = render("summarize", interaction=interaction, title=item.title, reasons=reasons)
        reply = gateway.complete_structured(_chat(SUMMARY_KEY, prompt, schema_ref="feature_list"))
        sides[slot] = _dedupe(reply.parsed["features"])
    if not sides["pos"]:
        raise ExtractionEmptyError(f"no pos features for item {pair.pos.id}")
    if not sides["neg"]:
        raise ExtractionEmptyError(f"no neg features for item {pair.neg.id}")
    return FeatureExtraction(pos_features=sides["pos"], neg_features=sides["neg"])


def _resolve_feature(graph: PreferenceGraph, label: str, gateway, effects: list[dict]) -> str:
    existing = graph.find_label(label)
    if existing is not None:
        return existing

    embedding = gateway.embed(label)
    shortlist = graph.similar_nodes(embedding, SIMILARITY_THRESHOLD, SHORTLIST_LIMIT)
    if shortlist:
        candidates = "\n".join(
            f"- {graph.nodes[node_id].label}" for node_id, _ in shortlist
        )
        prompt = render("merge", feature=label, candidates=candidates)
        reply = gateway.complete_structured(_chat(MERGE_KEY, prompt, schema_ref="merge_verdict"))
        verdict = reply.parsed
        if verdict["merge"]:
            by_label = {
                normalize_label(graph.nodes[node_id].label): node_id
                for node_id, _ in shortlist
            }
            resolved: list[str] = []
            for target in verdict.get("targets", []):
                node_id = by_label.get(normalize_label(target))
                if node_id is not None and node_id not in resolved:
                    resolved.append(node_id)
            if not resolved:
                # model said merge but named nothing usable: take the closest
                resolved = [shortlist[0][0]]
            survivor = resolved[0]
            graph.absorb_label(survivor, label)
            effects.append({"op": "absorb", "survivorId": survivor, "label": label})
            extras = resolved[1:]
            if extras:
                graph.merge_features(survivor, extras)
                effects.append({"op": "merge", "survivorId": survivor, "absorbedIds": extras})
            return survivor

    node_id, created = graph.upsert_feature(label, embedding)
    assert created
    node = graph.nodes[node_id]
    effects.append(
        {
            "op": "new_node",
            "id": node_id,
            "label": node.label,
            "embedding": [float(v) for v in node.embedding],
            "createdAt": node.created_at,
        }
    )
    return node_id


def reflect(graph: PreferenceGraph, extraction: FeatureExtraction, gateway) -> list[dict]:
    """Mutates `graph` in place; returns the ordered effect ops performed."""
    effects: list[dict] = []
    pos_ids = [_resolve_feature(graph, label, gateway, effects) for label in extraction.pos_features]
    neg_ids = [_resolve_feature(graph, label, gateway, effects) for label in extraction.neg_features]
    for pos_id in pos_ids:
        for neg_id in neg_ids:
            if pos_id == neg_id:
                graph.drop_self_loop(1)
                effects.append({"op": "self_loop_drop", "weight": 1})
            else:
                graph.add_preference_edge(neg_id, pos_id)
                effects.append({"op": "edge", "src": neg_id, "dst": pos_id})
    return effects


def apply_effects(graph: PreferenceGraph, effects: list[dict]) -> None:
    """Pure replay of reflect output; the only sanctioned mutation path."""
    for op in effects:
        kind = op["op"]
        if kind == "new_node":
            graph.insert_node(op["id"], op["label"], op["embedding"], op["createdAt"])
        elif kind == "absorb":
            graph.absorb_label(op["survivorId"], op["label"])
        elif kind == "merge":
            graph.merge_features(op["survivorId"], op["absorbedIds"])
        elif kind == "edge":
            graph.add_preference_edge(op["src"], op["dst"])
        elif kind == "self_loop_drop":
            graph.drop_self_loop(op["weight"])
        else:
            raise ValueError(f"unknown effect op {kind!r}")


def plan_ingest(
    graph: PreferenceGraph,
    impression: Impression,
    gateway,
    rng,
    view: ProfileView,
    expected_user_id: str | None = None,
) -> IngestPlan:
    """Run the pipeline against a copy of `graph` and report the effects.

    The caller decides what to do with the plan (typically: append the
    event, then apply_effects on the live graph). Per-pair gateway errors
    and empty extractions skip that pair and are reported in `skipped`.
    """
    if expected_user_id is not None and impression.user_id != expected_user_id:
        raise UserMismatchError(
            f"impression {impression.impression_id} belongs to {impression.user_id!r}, "
            f"profile tracks {expected_user_id!r}"
        )

    working = graph.copy()
    effects: list[dict] = []
    skipped: list[dict] = []
    extractions: list[dict] = []
    pairs = sample_pairs(impression, rng)
    applied = 0

    for index, pair in enumerate(pairs):
        stage = "perceive"
        try:
            report = perceive(pair, view, gateway)
            stage = "summarize"
            extraction = summarize(pair, report, gateway)
        except (GatewayError, ExtractionEmptyError) as exc:
            skipped.append(
                {
                    "pairIndex": index,
                    "posId": pair.pos.id,
                    "negId": pair.neg.id,
                    "stage": stage,
                    "error": str(exc),
                }
            )
            continue
        scratch = working.copy()
        try:
            pair_effects = reflect(scratch, extraction, gateway)
        except GatewayError as exc:
            skipped.append(
                {
                    "pairIndex": index,
                    "posId": pair.pos.id,
                    "negId": pair.neg.id,
                    "stage": "reflect",
                    "error": str(exc),
                }
            )
            continue
        working = scratch
        effects.extend(pair_effects)
        applied += 1
        extractions.append(
            {
                "posId": pair.pos.id,
                "negId": pair.neg.id,
                "posFeatures": list(extraction.pos_features),
                "negFeatures": list(extraction.neg_features),
            }
        )

    return IngestPlan(
        impression_id=impression.impression_id,
        pairs_sampled=len(pairs),
        pairs_applied=applied,
        skipped=skipped,
        effects=effects,
        graph=working,
        extractions=extractions,
    )
