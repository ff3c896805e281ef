"""Planted-preference synthetic benchmark.

A small world with known per-user topic weights. Every item title names one
topic token and one style token; the reader clicks the highest-weight topic
in each impression, so an exact predictor exists and upper-bounds accuracy.

OracleBackend is a deterministic prompt-driven stand-in for a capable model:
it extracts the planted tokens faithfully, scores prediction slates from
whatever profile section the prompt carries, and degrades to word heuristics
on text without planted tokens. When the perception prompt carries the
profile-omitted marker it swaps the style token for the topic about half the
time, which is the planted failure mode for profile-free perception.
"""

from __future__ import annotations

import hashlib
import json
import re

import numpy as np

from feedmask.graph import BAND_NAMES
from feedmask.pipeline import Impression, Item

TOPIC_PATTERN = re.compile(r"topic-\d{2}")
STYLES = ("brisk style", "rambling style")
STYLE_PATTERN = re.compile("|".join(STYLES))
PROFILE_OMITTED = "(profile omitted)"

_TITLE_IN_PERCEIVE = re.compile(r"an item titled (.+?), assuming you")
_REASONS_IN_SUMMARY = re.compile(r"reasons they provided: (.+?)\n\nBased on", re.DOTALL)
_CANDIDATE_LINE = re.compile(r"^(\d+)\. (.+)$", re.MULTILINE)

_STOPWORDS = frozenset(
    "a an and as at by for from in of on or the to with piece about".split()
)


def _hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def planted_tokens(text: str) -> list[str]:
    """Topic and style tokens in first-appearance order."""
    found = []
    for match in re.finditer(f"({TOPIC_PATTERN.pattern})|({STYLE_PATTERN.pattern})", text):
        token = match.group(0)
        if token not in found:
            found.append(token)
    return found


class PlantedWorld:
    """Impression stream for one synthetic reader with known topic weights."""

    def __init__(self, seed: int = 0, topics: int = 8, impressions: int = 40,
                 slate: int = 5, user_id: str = "synth"):
        if not 2 <= slate <= topics:
            raise ValueError("slate must fit distinct topics")
        rng = np.random.default_rng(seed)
        self.user_id = user_id
        self.topics = [f"topic-{i:02d}" for i in range(topics)]
        spread = np.linspace(-2.0, 2.0, topics)
        self.weights = {
            topic: float(w)
            for topic, w in zip(self.topics, rng.permutation(spread))
        }
        self.impressions: list[Impression] = []
        counter = 0
        for index in range(impressions):
            drawn = [self.topics[int(i)] for i in rng.permutation(topics)[:slate]]
            shown = []
            for topic in drawn:
                style = STYLES[int(rng.integers(len(STYLES)))]
                counter += 1
                shown.append(
                    Item(
                        id=f"p{counter:04d}",
                        title=f"A {style} piece on {topic}",
                        category="synthetic",
                    )
                )
            best = max(range(slate), key=lambda i: self.weights[drawn[i]])
            self.impressions.append(
                Impression(
                    impression_id=f"synth-{index:04d}",
                    user_id=user_id,
                    timestamp=f"01/01/2024 {index % 12 + 1:02d}:{index % 60:02d}:00 AM",
                    displayed=[(item, i == best) for i, item in enumerate(shown)],
                )
            )

    def utility(self, item: Item) -> float:
        topics = TOPIC_PATTERN.findall(item.title)
        return sum(self.weights.get(t, 0.0) for t in topics)

    def exact_predict(self, candidates: list[Item]) -> int:
        """Argmax planted utility; the oracle predictor for accuracy bounds."""
        return max(range(len(candidates)), key=lambda i: self.utility(candidates[i]))


class OracleBackend:
    """Deterministic text-driven backend for offline benchmark runs."""

    backend_id = "oracle"

    def complete(self, request) -> str:
        key = request.script_key or ""
        prompt = "\n\n".join(m.text for m in request.messages)
        if key.startswith("perceive"):
            return self._perceive(prompt)
        if key.startswith("summary"):
            return self._summarize(prompt)
        if key.startswith("reflect"):
            return json.dumps({"merge": False, "targets": []})
        if key.startswith("predict"):
            return self._predict(prompt)
        return "Understood."

    # perception: name the topic, unless running blind and the coin says style
    def _perceive(self, prompt: str) -> str:
        match = _TITLE_IN_PERCEIVE.search(prompt)
        title = match.group(1) if match else prompt
        topics = TOPIC_PATTERN.findall(title)
        styles = STYLE_PATTERN.findall(title)
        blind = PROFILE_OMITTED in prompt
        if blind and styles and _hash(title) % 2 == 0:
            return f"The {styles[0]} of the writing stood out more than anything."
        if topics:
            return f"The subject {topics[0]} was the deciding factor."
        words = [w for w in re.findall(r"[a-z]+", title.lower()) if w not in _STOPWORDS]
        return "It came down to " + (" and ".join(words[:2]) if words else "the headline") + "."

    def _summarize(self, prompt: str) -> str:
        match = _REASONS_IN_SUMMARY.search(prompt)
        reasons = match.group(1) if match else prompt
        features = planted_tokens(reasons)
        if not features:
            words = [w for w in re.findall(r"[a-z]+", reasons.lower()) if w not in _STOPWORDS]
            features = words[:2] or ["general"]
        return json.dumps({"features": features})

    def _predict(self, prompt: str) -> str:
        candidates = _CANDIDATE_LINE.findall(prompt)
        if not candidates:
            return json.dumps({"choice": 0})
        scores = [self._score(title, prompt) for _, title in candidates]
        best = max(scores)
        winners = [i for i, s in enumerate(scores) if s == best]
        if len(winners) == 1:
            choice = winners[0]
        else:
            choice = winners[_hash(prompt) % len(winners)]
        return json.dumps({"choice": choice})

    def _score(self, title: str, prompt: str) -> float:
        ranking = _profile_ranking(prompt)
        counts = _clicked_counts(prompt)
        liked = _liked_list(prompt)
        score = 0.0
        for token in planted_tokens(title):
            if token in ranking:
                score += len(ranking) - ranking[token]
            score += 2.0 * counts.get(token, 0)
            if token in liked:
                score += 1.0
        return score


def _profile_ranking(prompt: str) -> dict[str, int]:
    """Label -> global rank position parsed from five-band profile lines."""
    ranking: dict[str, int] = {}
    position = 0
    for line in prompt.splitlines():
        line = line.strip()
        for band in BAND_NAMES:
            if line.startswith(f"{band}:"):
                body = line[len(band) + 1:].strip()
                if body and body != "(none)":
                    for label in body.split("; "):
                        if label and label not in ranking:
                            ranking[label] = position
                            position += 1
    return ranking


def _clicked_counts(prompt: str) -> dict[str, int]:
    """Token frequency over a raw clicked-items section."""
    counts: dict[str, int] = {}
    active = False
    for line in prompt.splitlines():
        stripped = line.strip()
        if stripped.startswith("Previously clicked items:"):
            active = True
            continue
        if active:
            if not stripped.startswith("- "):
                active = False
                continue
            for token in planted_tokens(stripped):
                counts[token] = counts.get(token, 0) + 1
    return counts


def _liked_list(prompt: str) -> set[str]:
    for line in prompt.splitlines():
        stripped = line.strip()
        if stripped.startswith("Liked features:"):
            body = stripped[len("Liked features:"):].strip()
            if body and body != "(none)":
                return {label.strip() for label in body.split(";") if label.strip()}
    return set()
