"""Text embedders. The hash embedder is the deterministic stub: equal
normalized text always maps to the same unit vector."""

from __future__ import annotations

import hashlib

import numpy as np

from feedmask.errors import EmptyTextError

DEFAULT_DIM = 64


def _normalize_text(text: str) -> str:
    return " ".join(text.casefold().split())


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class HashEmbedder:
    """Seeded hash of the normalized text projected onto the unit sphere."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        key = _normalize_text(text)
        if not key:
            raise EmptyTextError("cannot embed blank text")
        digest = hashlib.sha256(f"{self.seed}:{key}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)


class StaticEmbedder:
    """Embedder with caller-pinned vectors; unknown text falls back to a
    hash embedding. Lets tests control which labels look similar."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self._fallback = HashEmbedder(dim=dim, seed=seed)
        self._pinned: dict[str, np.ndarray] = {}

    def pin(self, text: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        self._pinned[_normalize_text(text)] = vec / np.linalg.norm(vec)

    def embed(self, text: str) -> np.ndarray:
        key = _normalize_text(text)
        if not key:
            raise EmptyTextError("cannot embed blank text")
        if key in self._pinned:
            return self._pinned[key]
        return self._fallback.embed(text)
