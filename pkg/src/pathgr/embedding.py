"""Deterministic hashed character-trigram text encoder and cosine ranking."""

from __future__ import annotations

from functools import lru_cache
from typing import Hashable, Protocol, Sequence

import numpy as np

DEFAULT_DIM = 1024

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


class Encoder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...

    def dim(self) -> int: ...


class TrigramEncoder:
    """Bag of lowercase character 3-grams hashed into ``dim`` buckets.

    Vectors are L2-normalized; texts shorter than three characters after
    trimming map to the all-zero vector.
    """

    def __init__(self, dim: int = DEFAULT_DIM, cache_size: int = 65536):
        if dim < 1:
            raise ValueError("dim must be positive")
        self._dim = dim
        self._embed = lru_cache(maxsize=cache_size)(self._embed_uncached)

    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> np.ndarray:
        # cached arrays are shared, hand out read-only views
        return self._embed(text)

    def _embed_uncached(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        s = text.strip().lower()
        for i in range(len(s) - 2):
            vec[fnv1a_64(s[i:i + 3].encode("utf-8")) % self._dim] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        vec.setflags(write=False)
        return vec


_default_encoder: TrigramEncoder | None = None


def default_encoder() -> TrigramEncoder:
    global _default_encoder
    if _default_encoder is None:
        _default_encoder = TrigramEncoder()
    return _default_encoder


def embed(text: str, encoder: Encoder | None = None) -> np.ndarray:
    return (encoder or default_encoder()).embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        return 0.0
    return float(np.clip(a @ b, -1.0, 1.0))


def rank_vectors(
    query: np.ndarray, ids: Sequence[Hashable], matrix: np.ndarray, k: int
) -> list[tuple[Hashable, float]]:
    """Top-``k`` rows of ``matrix`` by dot product with ``query``.

    Rows must be unit-norm or zero.  Ties are broken by id ascending.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(ids) == 0:
        return []
    if not query.any():
        scores = np.zeros(len(ids))
    else:
        scores = np.clip(matrix @ query, -1.0, 1.0)
    # BLAS may differ in the last ulp between identical rows; round so ties stay ties
    keys = np.round(scores, 12)
    order = sorted(range(len(ids)), key=lambda i: (-keys[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[:k]]


def top_k(
    query_text: str,
    items: Sequence[tuple[Hashable, str]],
    k: int,
    encoder: Encoder | None = None,
) -> list[tuple[Hashable, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not items:
        return []
    enc = encoder or default_encoder()
    ids = [i for i, _ in items]
    matrix = np.stack([enc.embed(text) for _, text in items])
    return rank_vectors(enc.embed(query_text), ids, matrix, k)
