"""Weighted directed preference graph with PageRank ranking and banding.

Nodes are short feature labels; an edge neg -> pos with weight w records
that the pos feature beat the neg feature in w observed pairs. Ranking
runs weighted PageRank (uniform teleport, dangling mass spread uniformly)
and the ranked order is cut into the five profile bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from feedmask.errors import (
    EmptyLabelError,
    GraphError,
    SelfEdgeError,
    SurvivorAbsorbedError,
    UnknownFeatureError,
)
from feedmask.ranker import pagerank_kernel

BAND_NAMES = ("Very liked", "Fairly liked", "Neutral", "Fairly disliked", "Very disliked")


def normalize_label(label: str) -> str:
    return " ".join(label.casefold().split())


@dataclass
class FeatureNode:
    id: str
    label: str
    embedding: np.ndarray
    created_at: int
    absorbed_labels: list[str] = field(default_factory=list)


@dataclass
class RankedFeatures:
    """PageRank scores, descending; ties broken by node age then id."""

    entries: list[tuple[str, float]]
    converged: bool = True
    iterations: int = 0


@dataclass
class PreferenceProfile:
    """Five ordered bands of feature labels, most liked band first."""

    bands: list[list[str]]

    @property
    def labels(self) -> list[str]:
        return [label for band in self.bands for label in band]

    def to_json(self) -> dict:
        return {name: list(band) for name, band in zip(BAND_NAMES, self.bands)}


def band_sizes(n: int, bands: int = 5) -> list[int]:
    """Split n into `bands` contiguous chunks by repeated ceil division."""
    sizes = []
    remaining = n
    for k in range(bands, 0, -1):
        take = math.ceil(remaining / k)
        sizes.append(take)
        remaining -= take
    return sizes


class PreferenceGraph:
    def __init__(self):
        self.nodes: dict[str, FeatureNode] = {}
        self.edges: dict[tuple[str, str], int] = {}
        self.discarded_self_loop_weight = 0
        # normalized label -> node id; covers primary and absorbed labels so
        # a previously merged label resolves to its survivor
        self._label_index: dict[str, str] = {}
        self._id_counter = 0
        self._created_counter = 0

    # -- construction -------------------------------------------------

    def upsert_feature(self, label: str, embedding: np.ndarray) -> tuple[str, bool]:
        """Return (node id, created). Reuses the node when the normalized
        label is already known (including labels absorbed by a merge)."""
        key = normalize_label(label)
        if not key:
            raise EmptyLabelError("feature label is empty")
        existing = self._label_index.get(key)
        if existing is not None:
            return existing, False
        self._id_counter += 1
        node_id = f"n{self._id_counter:06d}"
        self._insert(node_id, label, embedding, self._created_counter)
        return node_id, True

    def insert_node(self, node_id: str, label: str, embedding, created_at: int) -> None:
        """Low-level insert with a caller-supplied id; used by event replay."""
        if node_id in self.nodes:
            raise GraphError(f"duplicate node id {node_id}")
        self._insert(node_id, label, np.asarray(embedding, dtype=np.float64), created_at)
        # keep counters ahead of replayed ids so later live inserts stay unique
        if node_id.startswith("n"):
            try:
                self._id_counter = max(self._id_counter, int(node_id[1:]))
            except ValueError:
                pass

    def _insert(self, node_id: str, label: str, embedding: np.ndarray, created_at: int) -> None:
        key = normalize_label(label)
        if not key:
            raise EmptyLabelError("feature label is empty")
        self.nodes[node_id] = FeatureNode(node_id, label, np.asarray(embedding, dtype=np.float64), created_at)
        self._label_index[key] = node_id
        self._created_counter = max(self._created_counter, created_at) + 1

    def absorb_label(self, survivor_id: str, label: str) -> None:
        """Record that `label` now names the survivor node (LLM-confirmed merge
        of an incoming feature into an existing node)."""
        node = self._require(survivor_id)
        node.absorbed_labels.append(label)
        self._label_index[normalize_label(label)] = survivor_id

    def add_preference_edge(self, neg_id: str, pos_id: str) -> None:
        if neg_id == pos_id:
            raise SelfEdgeError(f"edge {neg_id} -> {pos_id}")
        self._require(neg_id)
        self._require(pos_id)
        key = (neg_id, pos_id)
        self.edges[key] = self.edges.get(key, 0) + 1

    def drop_self_loop(self, weight: int = 1) -> None:
        """Account for preference evidence that collapsed onto one node."""
        self.discarded_self_loop_weight += weight

    def merge_features(self, survivor_id: str, absorbed_ids: list[str]) -> None:
        """Re-point all edges of the absorbed nodes onto the survivor.

        Weights sum on collision; edges that would become self-loops are
        dropped with their weight tracked in discarded_self_loop_weight.
        """
        survivor = self._require(survivor_id)
        if survivor_id in absorbed_ids:
            raise SurvivorAbsorbedError(survivor_id)
        absorbed = [self._require(a) for a in absorbed_ids]

        remap = {a: survivor_id for a in absorbed_ids}
        rewired: dict[tuple[str, str], int] = {}
        for (src, dst), w in self.edges.items():
            src = remap.get(src, src)
            dst = remap.get(dst, dst)
            if src == dst:
                self.discarded_self_loop_weight += w
                continue
            key = (src, dst)
            rewired[key] = rewired.get(key, 0) + w
        self.edges = rewired

        for node in absorbed:
            survivor.absorbed_labels.append(node.label)
            survivor.absorbed_labels.extend(node.absorbed_labels)
            del self.nodes[node.id]
        for key, owner in list(self._label_index.items()):
            if owner in remap:
                self._label_index[key] = survivor_id

    # -- queries ------------------------------------------------------

    def _require(self, node_id: str) -> FeatureNode:
        node = self.nodes.get(node_id)
        if node is None:
            raise UnknownFeatureError(node_id)
        return node

    def find_label(self, label: str) -> str | None:
        return self._label_index.get(normalize_label(label))

    @property
    def total_edge_weight(self) -> int:
        return sum(self.edges.values())

    def similar_nodes(self, embedding: np.ndarray, threshold: float, limit: int) -> list[tuple[str, float]]:
        """Nodes with cosine similarity >= threshold, best first, capped."""
        if not self.nodes:
            return []
        ids = list(self.nodes)
        mat = np.stack([self.nodes[i].embedding for i in ids])
        sims = mat @ np.asarray(embedding, dtype=np.float64)
        hits = [(ids[k], float(sims[k])) for k in range(len(ids)) if sims[k] >= threshold]
        hits.sort(key=lambda h: (-h[1], self.nodes[h[0]].created_at, h[0]))
        return hits[:limit]

    # -- ranking ------------------------------------------------------

    def rank(self, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200) -> RankedFeatures:
        ids = list(self.nodes)
        n = len(ids)
        if n == 0:
            return RankedFeatures(entries=[], converged=True, iterations=0)

        index = {node_id: k for k, node_id in enumerate(ids)}
        out_weight = [0.0] * n
        triples = []
        for (src, dst), w in self.edges.items():
            si, di = index[src], index[dst]
            out_weight[si] += w
            triples.append((si, di, float(w)))
        triples.sort()

        indptr = np.zeros(n + 1, dtype=np.int64)
        indices = np.zeros(len(triples), dtype=np.int64)
        probs = np.zeros(len(triples), dtype=np.float64)
        for k, (si, di, w) in enumerate(triples):
            indptr[si + 1] += 1
            indices[k] = di
            probs[k] = w / out_weight[si]
        indptr = np.cumsum(indptr)
        dangling = np.array([1 if out_weight[k] == 0 else 0 for k in range(n)], dtype=np.uint8)

        scores, iterations, converged = pagerank_kernel(
            indptr, indices, probs, dangling, damping, tol, max_iter
        )
        order = sorted(
            range(n),
            key=lambda k: (-scores[k], self.nodes[ids[k]].created_at, ids[k]),
        )
        entries = [(ids[k], float(scores[k])) for k in order]
        return RankedFeatures(entries=entries, converged=bool(converged), iterations=int(iterations))

    def band(self, ranked: RankedFeatures) -> PreferenceProfile:
        labels = [self.nodes[node_id].label for node_id, _ in ranked.entries]
        bands = []
        start = 0
        for size in band_sizes(len(labels)):
            bands.append(labels[start : start + size])
            start += size
        return PreferenceProfile(bands=bands)

    # -- serialization ------------------------------------------------

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "id": node.id,
                    "label": node.label,
                    "embedding": [float(v) for v in node.embedding],
                    "createdAt": node.created_at,
                    "absorbedLabels": list(node.absorbed_labels),
                }
                for node in self.nodes.values()
            ],
            "edges": sorted([src, dst, w] for (src, dst), w in self.edges.items()),
            "discardedSelfLoopWeight": self.discarded_self_loop_weight,
            "idCounter": self._id_counter,
            "createdCounter": self._created_counter,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PreferenceGraph":
        graph = cls()
        for node in data["nodes"]:
            graph.insert_node(node["id"], node["label"], node["embedding"], node["createdAt"])
            graph.nodes[node["id"]].absorbed_labels = list(node["absorbedLabels"])
            for label in node["absorbedLabels"]:
                graph._label_index[normalize_label(label)] = node["id"]
        for src, dst, w in data["edges"]:
            graph.edges[(src, dst)] = w
        graph.discarded_self_loop_weight = data["discardedSelfLoopWeight"]
        # counters are persisted so a reloaded graph never re-issues an id
        # that an absorbed (since deleted) node once held
        graph._id_counter = max(graph._id_counter, data.get("idCounter", 0))
        graph._created_counter = max(graph._created_counter, data.get("createdCounter", 0))
        return graph

    def copy(self) -> "PreferenceGraph":
        return PreferenceGraph.from_json(self.to_json())
