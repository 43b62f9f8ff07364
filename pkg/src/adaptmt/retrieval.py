"""Fuzzy-match retrieval: deterministic embeddings plus exhaustive cosine scan.

The built-in embedder is a hashed character-trigram term-frequency vector:
the text is whitespace-normalized and lowercased, wrapped in boundary
markers, split into overlapping 3-character substrings, and each trigram is
hashed with FNV-1a 64 (fixed offset basis, so identical input always yields
identical vectors) into one of 1024 buckets. The bucket-count vector is then
L2-normalized, making the dot product of two embeddings their cosine
similarity. It is dependency-free and language-agnostic; a neural sentence
encoder can be plugged in over the wire instead (see RemoteEmbedder).

Search is an exact exhaustive scan, not ANN: at the TM sizes in scope
(<= ~1e5 segments) a flat matrix product is fast, and exactness keeps the
retrieval oracle-testable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from adaptmt.tm import SegmentPair, TranslationMemory, normalize_text

EMBEDDING_DIM = 1024

_SOT = "\x02"  # start-of-text boundary marker
_EOT = "\x03"  # end-of-text boundary marker

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF

# trigram vocabulary is small; caching buckets avoids rehashing across a corpus
_bucket_cache: dict[str, int] = {}


class RetrievalError(ValueError):
    """Invalid retrieval input."""


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash (fixed offset basis 0xcbf29ce484222325)."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def trigrams(text: str) -> list[str]:
    """Character trigrams of the normalized, lowercased, boundary-marked text."""
    norm = normalize_text(text).lower()
    if not norm:
        raise RetrievalError("cannot embed empty text")
    marked = _SOT + norm + _EOT
    return [marked[i : i + 3] for i in range(len(marked) - 2)]


def _bucket(trigram: str) -> int:
    b = _bucket_cache.get(trigram)
    if b is None:
        b = fnv1a_64(trigram.encode("utf-8")) % EMBEDDING_DIM
        _bucket_cache[trigram] = b
    return b


def embed(text: str) -> np.ndarray:
    """Unit-normalized embedding vector; deterministic for identical input."""
    vec = np.zeros(EMBEDDING_DIM, dtype=np.float64)
    for tri in trigrams(text):
        vec[_bucket(tri)] += 1.0
    return vec / np.linalg.norm(vec)


def embed_many(texts: list[str]) -> np.ndarray:
    out = np.empty((len(texts), EMBEDDING_DIM), dtype=np.float64)
    for i, text in enumerate(texts):
        out[i] = embed(text)
    return out


class RemoteEmbedder:
    """Optional external embedding provider over HTTP.

    POST {"texts": [...]} to the endpoint; expects {"vectors": [[...], ...]}.
    The dimension is announced at handshake (first response) and must stay
    constant for the life of the index.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.dimension: int | None = None

    def embed_many(self, texts: list[str]) -> np.ndarray:
        import requests

        resp = requests.post(
            self.endpoint, json={"texts": texts}, timeout=self.timeout
        )
        resp.raise_for_status()
        vectors = np.asarray(resp.json()["vectors"], dtype=np.float64)
        if self.dimension is None:
            self.dimension = vectors.shape[1]
        elif vectors.shape[1] != self.dimension:
            raise RetrievalError(
                f"embedding dimension changed: {vectors.shape[1]} != {self.dimension}"
            )
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        return vectors / np.where(norms == 0, 1.0, norms)


@dataclass
class RetrievalConfig:
    """top_k is conventionally 1..10; larger values work but warn."""

    top_k: int = 5
    exclude_exact_self: bool = False
    min_similarity: float | None = None

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise RetrievalError(f"top_k must be >= 1, got {self.top_k}")
        if self.top_k > 10:
            warnings.warn(
                f"top_k={self.top_k} is outside the usual 1..10 range",
                stacklevel=2,
            )
        if self.min_similarity is not None and not 0.0 <= self.min_similarity <= 1.0:
            raise RetrievalError("min_similarity must be in [0, 1]")


@dataclass(frozen=True)
class FuzzyMatch:
    pair: SegmentPair
    score: float


class TMIndex:
    """Immutable snapshot of TM embeddings for exhaustive cosine search.

    Rebuilds produce a new index; callers swap the reference atomically so
    concurrent readers see either the old or the new index, never a partial
    one.
    """

    def __init__(self, pairs: list[SegmentPair], vectors: np.ndarray):
        self.pairs = pairs
        self.vectors = vectors
        self._norm_sources = [normalize_text(p.source).lower() for p in pairs]

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def build(cls, tm: TranslationMemory) -> "TMIndex":
        if len(tm) == 0:
            raise RetrievalError("cannot build an index over an empty TM")
        pairs = list(tm.pairs)
        return cls(pairs, embed_many([p.source for p in pairs]))

    def extended(self, new_pairs: list[SegmentPair]) -> "TMIndex":
        """New index with extra pairs appended; only the new rows are embedded."""
        if not new_pairs:
            return self
        new_vecs = embed_many([p.source for p in new_pairs])
        return TMIndex(self.pairs + new_pairs, np.vstack([self.vectors, new_vecs]))

    def retrieve(
        self,
        query: str,
        cfg: RetrievalConfig,
        self_id: int | None = None,
    ) -> list[FuzzyMatch]:
        """Top-k fuzzy matches, scores non-increasing, ties by insertion order.

        With cfg.exclude_exact_self, the pair whose id equals `self_id` and
        whose normalized source equals the normalized query is skipped (used
        when translating the context dataset against itself).
        """
        if not normalize_text(query):
            raise RetrievalError("query must be non-empty")
        qvec = embed(query)
        scores = self.vectors @ qvec
        # stable argsort keeps insertion order (earlier id first) among ties
        order = np.argsort(-scores, kind="stable")

        query_norm = normalize_text(query).lower()
        out: list[FuzzyMatch] = []
        for idx in order:
            if len(out) >= cfg.top_k:
                break
            pair = self.pairs[idx]
            if (
                cfg.exclude_exact_self
                and self_id is not None
                and pair.id == self_id
                and self._norm_sources[idx] == query_norm
            ):
                continue
            score = float(scores[idx])
            if cfg.min_similarity is not None and score < cfg.min_similarity:
                break
            out.append(FuzzyMatch(pair=pair, score=score))
        return out


# Table-style similarity buckets, highest first. The top bucket is closed
# ([0.9, 1.0]); the rest are half-open; everything below 0.5 pools together.
BUCKET_LABELS = (
    "[0.9, 1.0]",
    "[0.8, 0.9)",
    "[0.7, 0.8)",
    "[0.6, 0.7)",
    "[0.5, 0.6)",
    "[0.0, 0.5)",
)

_BUCKET_FLOORS = (0.9, 0.8, 0.7, 0.6, 0.5, 0.0)


def bucket_stats(matches: list[FuzzyMatch]) -> dict[str, int]:
    """Histogram of match counts per similarity bucket; counts sum to input size."""
    counts = dict.fromkeys(BUCKET_LABELS, 0)
    for match in matches:
        score = match.score
        if not -1e-9 <= score <= 1.0 + 1e-9:
            raise RetrievalError(f"score out of range: {score}")
        score = min(max(score, 0.0), 1.0)
        for label, floor in zip(BUCKET_LABELS, _BUCKET_FLOORS):
            if score >= floor:
                counts[label] += 1
                break
    return counts
