"""Embedding providers for gram clustering.

Three interchangeable backends: a deterministic offline fallback (hashed
character trigrams), a precomputed-vector file, and a remote HTTP endpoint.
All return unit-norm float64 rows aligned with the input order, so cosine
similarity reduces to a dot product downstream.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

# Keyed hash for the offline fallback. The key doubles as the seed constant:
# keeping it fixed makes fallback vectors reproducible across runs, platforms
# and Python processes (unlike builtin hash(), which is salted per process).
HASH_KEY = b"SG_MINE"
DEFAULT_HASH_DIM = 64


class EmbeddingProvider(ABC):
    """Maps gram surfaces to unit-norm vectors, deterministically per instance."""

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an array of shape (len(texts), dimension) with unit-norm rows."""


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot unit-normalize a zero embedding vector")
    return vectors / norms


class HashEmbedder(EmbeddingProvider):
    """Offline fallback: signed feature hashing of character trigrams.

    Each trigram of the space-padded surface is hashed with a fixed keyed
    blake2b; the digest picks a bucket and a sign. The result is L2-normalized.
    Quality is crude but deterministic, which is what the fallback is for:
    similar surfaces share trigrams, so near-duplicate phrasings still cluster.
    """

    def __init__(self, dim: int = DEFAULT_HASH_DIM):
        if dim < 2:
            raise ValueError(f"hash embedding dim must be >= 2, got {dim}")
        self._dim = dim

    @property
    def dimension(self) -> int:
        return self._dim

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        padded = f" {text} "
        for i in range(len(padded) - 2):
            digest = hashlib.blake2b(
                padded[i : i + 3].encode("utf-8"), digest_size=8, key=HASH_KEY
            ).digest()
            value = int.from_bytes(digest, "big")
            bucket = value % self._dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[bucket] += sign
        if not np.any(vec):
            # signs cancelled exactly; fall back to a deterministic one-hot
            digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=HASH_KEY).digest()
            vec[int.from_bytes(digest, "big") % self._dim] = 1.0
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            return np.zeros((0, self._dim), dtype=np.float64)
        return _normalize_rows(np.stack([self._embed_one(t) for t in texts]))


class PrecomputedEmbedder(EmbeddingProvider):
    """Vectors looked up from a  {surface: [floats]}  mapping or JSON file."""

    def __init__(self, vectors: dict[str, Sequence[float]]):
        if not vectors:
            raise ValueError("precomputed embedding table is empty")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions in table: {sorted(dims)}")
        self._dim = dims.pop()
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "PrecomputedEmbedder":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @property
    def dimension(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            if text not in self._table:
                raise ValueError(f"no precomputed embedding for gram {text!r}")
            rows.append(self._table[text])
        if not rows:
            return np.zeros((0, self._dim), dtype=np.float64)
        return _normalize_rows(np.stack(rows))


class HTTPEmbedder(EmbeddingProvider):
    """Remote embedding endpoint speaking the common JSON protocol.

    POSTs ``{"model": ..., "input": [...]}`` and expects
    ``{"data": [{"embedding": [...]}, ...]}`` in input order. The auth token is
    sent as a bearer header when provided. ``post`` is injectable for tests.
    """

    def __init__(
        self,
        url: str,
        model: str,
        dimension: int,
        api_key: str | None = None,
        timeout: float = 30.0,
        post: Callable[..., object] | None = None,
    ):
        if dimension < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {dimension}")
        self.url = url
        self.model = model
        self._dim = dimension
        self.api_key = api_key
        self.timeout = timeout
        self._post = post if post is not None else self._requests_post

    def _requests_post(self, url: str, payload: dict, headers: dict, timeout: float) -> dict:
        import requests

        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        resp.raise_for_status()
        return resp.json()

    @property
    def dimension(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            return np.zeros((0, self._dim), dtype=np.float64)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "input": list(texts)}
        try:
            body = self._post(self.url, payload, headers, self.timeout)
        except Exception as exc:
            raise RuntimeError(f"embedding endpoint {self.url} unreachable: {exc}") from exc
        if not isinstance(body, dict) or not isinstance(body.get("data"), list):
            raise RuntimeError(f"malformed embedding response from {self.url}")
        data = body["data"]
        if len(data) != len(texts):
            raise RuntimeError(
                f"embedding endpoint returned {len(data)} rows for {len(texts)} inputs"
            )
        rows = []
        for entry in data:
            vec = np.asarray(entry.get("embedding", ()), dtype=np.float64)
            if vec.shape != (self._dim,):
                raise RuntimeError(
                    f"embedding dimension mismatch: expected {self._dim}, got {vec.shape}"
                )
            rows.append(vec)
        return _normalize_rows(np.stack(rows))
