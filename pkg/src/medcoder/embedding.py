"""Embedding providers and the exact-scan cosine vector index.

Two providers: a remote HTTP provider speaking the JSON embedding wire
format, and a deterministic offline fallback that feature-hashes
character 3-grams. The index is a full-scan exact top-k search; at
ICD-10 scale (~70k billable codes) a scan is fast enough that no
approximate structure is warranted.
"""

from __future__ import annotations

import hashlib
import os
import struct
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyOntology,
    EmptyText,
    IndexFormatError,
    ProviderUnavailable,
)
from .ontology import Ontology, derive_hierarchy

INDEX_MAGIC = b"MCVI"
INDEX_VERSION = 1

SOURCE_DESCRIPTION = "DESCRIPTION"
SOURCE_SYNONYM = "SYNONYM"

EMBED_API_KEY_ENV = "MEDCODER_EMBED_API_KEY"


class EmbeddingProvider(Protocol):
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Embed one text and re-normalize to unit length."""
    if not text:
        raise EmptyText("cannot embed empty text")
    vec = provider.embed_batch([text])[0]
    return _unit(vec)


def _unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


class HashingEmbedder:
    """Deterministic offline embedder: character 3-grams feature-hashed
    into a fixed dimension, then L2-normalized."""

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            padded = f"  {text.lower()}  "
            for i in range(len(padded) - 2):
                gram = padded[i : i + 3]
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "little")
                bucket = value % self.dimension
                sign = 1.0 if (value >> 63) & 1 else -1.0
                out[row, bucket] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class HttpEmbeddingProvider:
    """Remote embedding provider.

    POSTs {"model": ..., "input": [...]} and reads
    {"data": [{"index": i, "embedding": [...]}, ...]}. Bearer token is
    read from MEDCODER_EMBED_API_KEY.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        timeout_secs: float = 30.0,
        max_attempts: int = 5,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.timeout_secs = timeout_secs
        self.max_attempts = max_attempts

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        headers = {}
        api_key = os.environ.get(EMBED_API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {"model": self.model, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                response = httpx.post(
                    self.base_url, json=body, headers=headers, timeout=self.timeout_secs
                )
                if response.status_code == 429:
                    raise ProviderUnavailable("rate limited")
                response.raise_for_status()
                payload = response.json()
                rows = sorted(payload["data"], key=lambda d: d["index"])
                return np.array([r["embedding"] for r in rows], dtype=np.float64)
            except (httpx.HTTPError, ProviderUnavailable, KeyError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(min(2.0**attempt * 0.1, 5.0))
        raise ProviderUnavailable(f"embedding provider failed after {self.max_attempts} attempts: {last_error}")


@dataclass(frozen=True)
class IndexEntry:
    code: str
    description: str
    chapter: str
    block: str
    category: str
    source: str  # DESCRIPTION or SYNONYM


@dataclass(frozen=True)
class SearchHit:
    code: str
    score: float
    matched_description: str


class VectorIndex:
    """Exact cosine-similarity index over unit vectors of one dimension."""

    def __init__(self, dimension: int, entries: list[IndexEntry], vectors: np.ndarray):
        if vectors.shape != (len(entries), dimension):
            raise DimensionMismatch(dimension, vectors.shape[-1] if vectors.ndim else 0)
        self.dimension = dimension
        self.entries = entries
        self.vectors = np.asarray(vectors, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        return search(self, query, k)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<III", INDEX_VERSION, self.dimension, len(self.entries)))
            for entry, vec in zip(self.entries, self.vectors):
                for text in (entry.code, entry.description, entry.chapter, entry.block, entry.category, entry.source):
                    raw = text.encode("utf-8")
                    fh.write(struct.pack("<H", len(raw)))
                    fh.write(raw)
                fh.write(np.asarray(vec, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str) -> "VectorIndex":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != INDEX_MAGIC:
                raise IndexFormatError(f"bad magic: {magic!r}")
            version, dimension, count = struct.unpack("<III", fh.read(12))
            if version != INDEX_VERSION:
                raise IndexFormatError(f"unsupported index version {version}")
            entries = []
            vectors = np.empty((count, dimension), dtype=np.float64)
            for i in range(count):
                texts = []
                for _ in range(6):
                    (length,) = struct.unpack("<H", fh.read(2))
                    texts.append(fh.read(length).decode("utf-8"))
                code, description, chapter, block, category, source = texts
                entries.append(
                    IndexEntry(
                        code=code,
                        description=description,
                        chapter=chapter,
                        block=block,
                        category=category,
                        source=source,
                    )
                )
                vectors[i] = np.frombuffer(fh.read(4 * dimension), dtype="<f4").astype(np.float64)
        return cls(dimension=dimension, entries=entries, vectors=vectors)


def build_index(ontology: Ontology, provider: EmbeddingProvider) -> VectorIndex:
    """Index one entry per (billable code, description) and per synonym."""
    if len(ontology) == 0:
        raise EmptyOntology("cannot index an empty ontology")
    entries: list[IndexEntry] = []
    texts: list[str] = []
    for code in sorted(ontology.codes):
        icd = ontology.codes[code]
        if not icd.billable:
            continue
        category, chapter = derive_hierarchy(code)
        entries.append(
            IndexEntry(
                code=code,
                description=icd.description,
                chapter=chapter,
                block=icd.block,
                category=category,
                source=SOURCE_DESCRIPTION,
            )
        )
        texts.append(icd.description)
        for synonym in ontology.synonym_descriptions.get(code, []):
            entries.append(
                IndexEntry(
                    code=code,
                    description=synonym,
                    chapter=chapter,
                    block=icd.block,
                    category=category,
                    source=SOURCE_SYNONYM,
                )
            )
            texts.append(synonym)
    vectors = provider.embed_batch(texts)
    vectors = np.stack([_unit(v) for v in vectors]) if len(texts) else np.zeros((0, provider.dimension))
    # float32 storage precision is the on-disk contract; quantize up front
    # so pre-save and post-load searches are identical.
    vectors = vectors.astype("<f4").astype(np.float64)
    return VectorIndex(dimension=provider.dimension, entries=entries, vectors=vectors)


def search(index: VectorIndex, query: np.ndarray, k: int) -> list[SearchHit]:
    """Exact top-k by cosine similarity with per-code dedup (best score
    kept); ties break to lexicographically smaller code."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dimension,):
        raise DimensionMismatch(index.dimension, int(query.shape[-1]) if query.ndim else 0)
    if k <= 0 or len(index) == 0:
        return []
    scores = index.vectors @ query
    best: dict[str, tuple[float, str]] = {}
    for entry, score in zip(index.entries, scores):
        score = float(score)
        kept = best.get(entry.code)
        if kept is None or score > kept[0]:
            best[entry.code] = (score, entry.description)
    ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[0]))
    return [
        SearchHit(code=code, score=score, matched_description=desc)
        for code, (score, desc) in ranked[:k]
    ]
