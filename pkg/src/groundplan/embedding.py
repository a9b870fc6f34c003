"""Sentence-embedding providers, cosine similarity and an exact nearest-neighbour index."""
from __future__ import annotations

import os
import struct
import threading
import time
from collections import OrderedDict
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from groundplan import kernels
from groundplan.errors import (
    DimensionMismatch,
    DuplicateKey,
    EmptyIndex,
    ProviderError,
    ZeroVector,
)

CACHE_MAGIC = b"EMB1"


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class EmbeddingProvider(Protocol):
    kind: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return a ``(len(texts), dim)`` float array."""


def _normalize_text(text: str) -> str:
    return " ".join(text.lower().replace("_", " ").split())


DEFAULT_STOPWORDS = frozenset({"a", "an", "the", "some", "my", "your", "his", "her", "its"})


class HashingProvider:
    """Deterministic offline provider: hashed character trigrams, words and word bigrams.

    Similar surface strings get similar vectors, which is all the pipeline
    tests need. Identical text always yields a bit-identical vector.
    Articles and possessives are dropped before hashing.
    """

    kind = "deterministic-mock"

    def __init__(self, dim: int = 512, ngram: int = 3, stopwords=DEFAULT_STOPWORDS):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.ngram = ngram
        self.stopwords = frozenset(stopwords)

    def embed_one(self, text: str) -> np.ndarray:
        words = _normalize_text(text).split()
        if not words:
            return np.zeros(self.dim)
        norm = " ".join(w for w in words if w not in self.stopwords) or " ".join(words)
        return kernels.hashed_features(f" {norm} ", self.dim, self.ngram)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            out[i] = self.embed_one(text)
        return out


class CachedProvider:
    """Serves vectors from an ``EMB1`` cache file; unknown texts are an error."""

    kind = "precomputed-file"

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self.table = table
        self.dim = dim

    @classmethod
    def from_file(cls, path) -> CachedProvider:
        keys, vectors = read_cache(path)
        return cls(dict(zip(keys, vectors)), vectors.shape[1])

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            try:
                out[i] = self.table[text]
            except KeyError:
                raise ProviderError("text not in embedding cache", key=text) from None
        return out


class RemoteEmbeddingProvider:
    """HTTP embedding service.

    Request body ``{"model": ..., "input": [texts]}``; the response may be
    ``{"data": [{"embedding": [...], "index": i}, ...]}`` or
    ``{"embeddings": [[...], ...]}``. Results are memoized (LRU) per instance.
    """

    kind = "remote-service"

    def __init__(
        self,
        url: str | None = None,
        model: str | None = None,
        token: str | None = None,
        dim: int | None = None,
        max_in_flight: int = 4,
        memo_size: int = 100_000,
        batch_size: int = 256,
        retries: int = 3,
        timeout: float = 60.0,
        client=None,
    ):
        import httpx

        self.url = url or os.environ.get("GROUNDPLAN_EMBEDDING_URL")
        if not self.url:
            raise ProviderError("no embedding endpoint configured (GROUNDPLAN_EMBEDDING_URL)")
        self.model = model or os.environ.get("GROUNDPLAN_EMBEDDING_MODEL", "")
        token = token or os.environ.get("GROUNDPLAN_EMBEDDING_KEY")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self.client = client or httpx.Client(timeout=timeout, headers=headers)
        self.dim = dim or 0
        self.batch_size = batch_size
        self.retries = retries
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._memo: OrderedDict[str, np.ndarray] = OrderedDict()
        self._memo_size = memo_size
        self._lock = threading.Lock()

    def _post(self, texts: list[str]) -> list[list[float]]:
        import httpx

        body = {"input": texts}
        if self.model:
            body["model"] = self.model
        delay = 0.5
        for attempt in range(self.retries + 1):
            try:
                with self._gate:
                    resp = self.client.post(self.url, json=body)
                resp.raise_for_status()
                payload = resp.json()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                if attempt == self.retries:
                    raise ProviderError(f"embedding request failed: {exc}", key=texts[0]) from exc
                time.sleep(min(delay, 8.0))
                delay *= 2
        if "data" in payload:
            rows = sorted(payload["data"], key=lambda r: r.get("index", 0))
            vectors = [r["embedding"] for r in rows]
        else:
            vectors = payload["embeddings"]
        if len(vectors) != len(texts):
            raise ProviderError(f"expected {len(texts)} vectors, got {len(vectors)}", key=texts[0])
        return vectors

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._memo]
        for start in range(0, len(missing), self.batch_size):
            chunk = missing[start : start + self.batch_size]
            vectors = self._post(chunk)
            with self._lock:
                for text, vec in zip(chunk, vectors):
                    arr = np.asarray(vec, dtype=np.float64)
                    if self.dim and arr.shape[0] != self.dim:
                        raise DimensionMismatch(f"service returned dim {arr.shape[0]}, expected {self.dim}")
                    self.dim = arr.shape[0]
                    self._memo[text] = arr
                    if len(self._memo) > self._memo_size:
                        self._memo.popitem(last=False)
        with self._lock:
            rows = []
            for text in texts:
                if text not in self._memo:  # evicted mid-call
                    self._memo[text] = np.asarray(self._post([text])[0], dtype=np.float64)
                self._memo.move_to_end(text)
                rows.append(self._memo[text])
        return np.vstack(rows) if rows else np.zeros((0, self.dim))


@dataclass(frozen=True, eq=False)
class EmbeddingIndex:
    keys: tuple[str, ...]
    vectors: np.ndarray  # unit rows, read-only
    raw: np.ndarray  # provider output, kept for the cache file

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def position(self, key: str) -> int:
        return self._positions[key]

    @property
    def _positions(self) -> dict[str, int]:
        pos = self.__dict__.get("_pos_cache")
        if pos is None:
            pos = {k: i for i, k in enumerate(self.keys)}
            object.__setattr__(self, "_pos_cache", pos)
        return pos

    def similarities(self, probes: np.ndarray) -> np.ndarray:
        """Cosine similarity of each probe row against every stored vector."""
        probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
        if probes.shape[1] != self.dim:
            raise DimensionMismatch(f"probe dim {probes.shape[1]} != index dim {self.dim}")
        return normalize_rows(probes) @ self.vectors.T


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVector("cannot normalize a zero vector")
    return matrix / norms


def build_index(provider: EmbeddingProvider, keys: Sequence[str]) -> EmbeddingIndex:
    keys = list(keys)
    if not keys:
        raise EmptyIndex("cannot build an index over no keys")
    seen = set()
    for key in keys:
        if key in seen:
            raise DuplicateKey(f"duplicate key {key!r}")
        seen.add(key)
    try:
        raw = np.asarray(provider.embed(keys), dtype=np.float64)
    except ProviderError:
        raise
    except Exception:
        for key in keys:  # locate the offending key
            try:
                provider.embed([key])
            except Exception as exc:
                raise ProviderError(f"provider failed: {exc}", key=key) from exc
        raise
    return index_from_vectors(keys, raw)


def index_from_vectors(keys: Sequence[str], raw: np.ndarray) -> EmbeddingIndex:
    raw = np.array(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != len(keys):
        raise DimensionMismatch(f"expected {len(keys)} vectors, got shape {raw.shape}")
    norms = np.linalg.norm(raw, axis=1)
    for key, norm in zip(keys, norms):
        if norm == 0.0:
            raise ZeroVector(f"zero embedding for key {key!r}")
    unit = raw / norms[:, None]
    unit.setflags(write=False)
    raw.setflags(write=False)
    return EmbeddingIndex(tuple(keys), unit, raw)


def query_top_k(index: EmbeddingIndex, probe, k: int) -> list[tuple[str, float]]:
    """Exact top-k by cosine; ties go to the lexicographically smaller key."""
    if len(index) == 0:
        raise EmptyIndex("index is empty")
    if not 1 <= k <= len(index):
        raise ValueError(f"k must be in [1, {len(index)}], got {k}")
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (index.dim,):
        raise DimensionMismatch(f"probe dim {probe.shape} != index dim {index.dim}")
    if not np.any(probe):
        raise ZeroVector("probe is a zero vector")
    sims = index.similarities(probe)[0]
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.keys[i]))[:k]
    return [(index.keys[i], float(sims[i])) for i in order]


def write_cache(path, keys: Sequence[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    count, dim = vectors.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC + struct.pack("<II", dim, count))
        for key, row in zip(keys, vectors):
            encoded = key.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)) + encoded)
            fh.write(row.tobytes())


def read_cache(path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not an EMB1 cache file")
    dim, count = struct.unpack_from("<II", data, 4)
    pos = 12
    keys = []
    vectors = np.zeros((count, dim), dtype=np.float32)
    for i in range(count):
        (klen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        keys.append(data[pos : pos + klen].decode("utf-8"))
        pos += klen
        vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += 4 * dim
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return keys, vectors.astype(np.float64)
