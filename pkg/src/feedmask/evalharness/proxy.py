"""K-way click-prediction proxy task with profile-construction ablations.

Per impression the runner builds a slate (true click + K-1 sampled
unclicked items, seeded shuffle), asks the gateway which candidate the
reader is most likely to click given the rendered profile, scores the
answer, and only then ingests the impression (predict-then-update).

Methods:
  full - banded graph profile, personalized perception
  A    - no reader information in the prompt
  B    - raw clicked titles as the profile
  C    - flat list of liked features only, no ranking, no dislikes
  D    - banded graph profile built with profile-blind perception
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from feedmask.errors import (
    ExtractionEmptyError,
    GatewayError,
    SchemaViolationError,
    UnknownMethodError,
)
from feedmask.gateway import ChatRequest, Message, SYSTEM_PROMPT, slate_choice_schema
from feedmask.gateway.templates import render
from feedmask.graph import PreferenceGraph, normalize_label
from feedmask.pipeline import (
    CLICKED,
    IGNORED,
    PERCEIVE_KEY,
    Impression,
    Item,
    PerceptionReport,
    ProfileView,
    _chat,
    format_bands,
    plan_ingest,
    reflect,
    sample_pairs,
    summarize,
)

METHODS = ("full", "A", "B", "C", "D")
PREDICT_KEY = "predict/v1"
PROFILE_OMITTED = "(profile omitted)"


@dataclass
class TrialSlate:
    candidates: list[Item]
    pos_index: int
    impression_id: str

    def __post_init__(self):
        if not 0 <= self.pos_index < len(self.candidates):
            raise ValueError("pos_index out of range")


@dataclass
class ProxyStep:
    slate: TrialSlate
    predicted_index: int
    correct: bool
    flagged: bool
    profile_version: int


@dataclass
class ProxyTrace:
    user_id: str
    method: str
    steps: list[ProxyStep]
    accuracy: float

    @property
    def correct_count(self) -> int:
        return sum(1 for step in self.steps if step.correct)


def make_trial(impression: Impression, k: int, rng) -> TrialSlate | None:
    """Slate of one true click plus K-1 unclicked items, or None when short."""
    if k < 2:
        raise ValueError("k must be at least 2")
    clicked = [item for item, c in impression.displayed if c]
    unclicked = [item for item, c in impression.displayed if not c]
    if not clicked or len(unclicked) < k - 1:
        return None
    pos = clicked[0]
    picks = rng.permutation(len(unclicked))[: k - 1]
    pool = [pos] + [unclicked[int(i)] for i in picks]
    order = rng.permutation(k)
    candidates = [pool[int(i)] for i in order]
    pos_index = int(np.nonzero(order == 0)[0][0])
    return TrialSlate(candidates=candidates, pos_index=pos_index,
                      impression_id=impression.impression_id)


# -- per-method profile state -------------------------------------------------

class _NoProfileRunner:
    """Method A: the prompt carries no reader information."""

    method = "A"

    def __init__(self):
        self.version = 0

    def render(self) -> str:
        return "Preference profile: (none)"

    def update(self, impression: Impression, gateway, rng) -> None:
        self.version += 1


class _RawClickedRunner:
    """Method B: clicked titles verbatim, no extraction at all."""

    method = "B"

    def __init__(self):
        self.version = 0
        self.titles: list[str] = []

    def render(self) -> str:
        if not self.titles:
            return "Previously clicked items: (none)"
        lines = "\n".join(f"- {title}" for title in self.titles)
        return "Previously clicked items:\n" + lines

    def update(self, impression: Impression, gateway, rng) -> None:
        self.titles.extend(item.title for item, clicked in impression.displayed if clicked)
        self.version += 1


class _LikedOnlyRunner:
    """Method C: flat insertion-order list of features from clicked items."""

    method = "C"

    def __init__(self):
        self.version = 0
        self.features: list[str] = []
        self._seen: set[str] = set()

    def render(self) -> str:
        body = "; ".join(self.features) if self.features else "(none)"
        return f"Liked features: {body}"

    def update(self, impression: Impression, gateway, rng) -> None:
        for pair in sample_pairs(impression, rng):
            try:
                report = _perceive_with_context(pair, self.render(), gateway)
                extraction = summarize(pair, report, gateway)
            except (GatewayError, ExtractionEmptyError):
                continue
            for label in extraction.pos_features:
                key = normalize_label(label)
                if key not in self._seen:
                    self._seen.add(key)
                    self.features.append(label)
        self.version += 1


class _BandedRunner:
    """Methods full and D: graph-ranked five-band profile."""

    def __init__(self, personalized: bool):
        self.method = "full" if personalized else "D"
        self.personalized = personalized
        self.graph = PreferenceGraph()
        self.version = 0

    def render(self) -> str:
        return format_bands(self.graph.band(self.graph.rank()))

    def update(self, impression: Impression, gateway, rng) -> None:
        if self.personalized:
            view = ProfileView(self.version, self.graph.band(self.graph.rank()))
            plan = plan_ingest(self.graph, impression, gateway, rng, view)
            self.graph = plan.graph
        else:
            for pair in sample_pairs(impression, rng):
                try:
                    report = _perceive_with_context(pair, PROFILE_OMITTED, gateway)
                    extraction = summarize(pair, report, gateway)
                    reflect(self.graph, extraction, gateway)
                except (GatewayError, ExtractionEmptyError):
                    continue
        self.version += 1


def _perceive_with_context(pair, context: str, gateway):
    """pipeline.perceive with the bands slot replaced by arbitrary context."""
    reasons = {}
    for item, interaction, slot in ((pair.pos, CLICKED, "pos"), (pair.neg, IGNORED, "neg")):
        prompt = render("perceive", bands=context, title=item.title, interaction=interaction)
        reply = gateway.complete(_chat(PERCEIVE_KEY, prompt))
        if not reply.text.strip():
            raise GatewayError(f"perceive returned blank reasons for {item.id}")
        reasons[slot] = reply.text.strip()
    return PerceptionReport(pos_reasons=reasons["pos"], neg_reasons=reasons["neg"],
                            profile_snapshot_version=0)


def make_runner(method: str):
    if method == "full":
        return _BandedRunner(personalized=True)
    if method == "A":
        return _NoProfileRunner()
    if method == "B":
        return _RawClickedRunner()
    if method == "C":
        return _LikedOnlyRunner()
    if method == "D":
        return _BandedRunner(personalized=False)
    raise UnknownMethodError(f"unknown method {method!r}")


class UniformChoiceBackend:
    """Seeded uniform predictions; non-prediction prompts get fixed text."""

    backend_id = "uniform"

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    def complete(self, request: ChatRequest) -> str:
        if (request.script_key or "").startswith("predict"):
            prompt = "\n".join(m.text for m in request.messages)
            k = sum(1 for line in prompt.splitlines() if line[:1].isdigit() and ". " in line)
            return json.dumps({"choice": int(self._rng.integers(max(k, 1)))})
        if request.schema_ref == "feature_list":
            return json.dumps({"features": ["general"]})
        if request.schema_ref == "merge_verdict":
            return json.dumps({"merge": False})
        return "No stronger signal either way."


def run_proxy(user_id: str, impressions: list[Impression], method: str, k: int,
              gateway, rng) -> ProxyTrace:
    """Predict-then-update over one user's chronological impressions."""
    runner = make_runner(method)
    schema_ref = f"slate_choice/{k}"
    if schema_ref not in gateway.schemas:
        gateway.schemas.register(schema_ref, slate_choice_schema(k))

    steps: list[ProxyStep] = []
    for impression in impressions:
        trial = make_trial(impression, k, rng)
        if trial is not None:
            candidates = "\n".join(
                f"{index}. {item.title}" for index, item in enumerate(trial.candidates)
            )
            prompt = render(
                "predict_choice", profile=runner.render(), k=str(k), candidates=candidates
            )
            request = ChatRequest(
                messages=[Message("system", SYSTEM_PROMPT), Message("user", prompt)],
                schema_ref=schema_ref,
                script_key=PREDICT_KEY,
            )
            flagged = False
            try:
                predicted = int(gateway.complete_structured(request).parsed["choice"])
            except (SchemaViolationError, GatewayError):
                # scored wrong on purpose: the fallback never equals pos_index
                flagged = True
                predicted = (trial.pos_index + 1) % k
            steps.append(
                ProxyStep(
                    slate=trial,
                    predicted_index=predicted,
                    correct=predicted == trial.pos_index,
                    flagged=flagged,
                    profile_version=runner.version,
                )
            )
        runner.update(impression, gateway, rng)
    accuracy = float(np.mean([s.correct for s in steps])) if steps else 0.0
    return ProxyTrace(user_id=user_id, method=method, steps=steps, accuracy=accuracy)


# -- whole-dataset orchestration ----------------------------------------------

@dataclass
class BenchmarkResult:
    traces: list[tuple[str, str, ProxyTrace]] = field(default_factory=list)

    def table(self) -> list[dict]:
        """Accuracy aggregated per (method, bucket), insertion-ordered."""
        rows: dict[tuple[str, str], dict] = {}
        for method, bucket, trace in self.traces:
            row = rows.setdefault(
                (method, bucket),
                {"method": method, "bucket": bucket, "users": 0, "steps": 0, "correct": 0},
            )
            row["users"] += 1
            row["steps"] += len(trace.steps)
            row["correct"] += trace.correct_count
        out = []
        for row in rows.values():
            row["accuracy"] = row["correct"] / row["steps"] if row["steps"] else None
            out.append(row)
        return out


def run_benchmark(dataset, methods, k, gateway_factory, quota, seed,
                  jsonl_path=None, csv_path=None) -> BenchmarkResult:
    """Bucketed proxy runs; per-user rngs derive from (seed, method, bucket, user)."""
    from feedmask.evalharness.mind import bucket_users

    for method in methods:
        if method not in METHODS:
            raise UnknownMethodError(f"unknown method {method!r}")
    cohorts = bucket_users(dataset, quota=quota, rng=np.random.default_rng([seed, 0]))
    result = BenchmarkResult()
    for mi, method in enumerate(methods):
        for bi, cohort in enumerate(cohorts):
            for ui, user_id in enumerate(cohort.users):
                rng = np.random.default_rng([seed, 1 + mi, bi, ui])
                gateway = gateway_factory()
                trace = run_proxy(
                    user_id, dataset.user_impressions(user_id), method, k, gateway, rng
                )
                result.traces.append((method, cohort.label, trace))

    if jsonl_path is not None:
        _write_jsonl(result, jsonl_path)
    if csv_path is not None:
        _write_csv(result, csv_path)
    return result


def _write_jsonl(result: BenchmarkResult, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for method, bucket, trace in result.traces:
            row = {
                "method": method,
                "bucket": bucket,
                "userId": trace.user_id,
                "steps": len(trace.steps),
                "correct": trace.correct_count,
                "flagged": sum(1 for s in trace.steps if s.flagged),
                "accuracy": trace.accuracy,
            }
            handle.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(result: BenchmarkResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["method", "bucket", "users", "steps", "correct", "accuracy"]
        )
        writer.writeheader()
        for row in result.table():
            writer.writerow(row)
