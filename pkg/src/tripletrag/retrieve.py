"""Adaptive triplet retrieval over a ``TripletIndex``.

Candidates from every query proposition are merged into one pool (max
score per proposition), ranked globally, and walked until ``k`` distinct
source chunks are covered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Collection, Sequence

import numpy as np

from .core import Triplet, TripletClass, classify, is_placeholder
from .index import TripletIndex

Embed = Callable[[Sequence[str]], np.ndarray]


@dataclass(frozen=True)
class RetrievalResult:
    propositions: tuple[tuple[int, float], ...]
    chunks: tuple[str, ...]
    exhausted: bool
    pool_width: int = 0
    pool_size: int = 0

    @property
    def prop_ids(self) -> tuple[int, ...]:
        return tuple(pid for pid, _ in self.propositions)

    @property
    def scores(self) -> tuple[float, ...]:
        return tuple(score for _, score in self.propositions)


def query_proposition(t: Triplet) -> str:
    """The two known fields of a searchable triplet, in field order."""
    if classify(t) is not TripletClass.SEARCHABLE:
        raise ValueError(f"query propositions need exactly one placeholder: {t}")
    return " ".join(v for v in t.fields if not is_placeholder(v))


def search_topn(index: TripletIndex, vector: np.ndarray, n: int) -> list[tuple[int, float]]:
    """Exact cosine search: top *n* ``(prop_id, score)``, score desc then prop_id asc."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(index) == 0:
        return []
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vector.shape[0] != index.dimension:
        raise ValueError(f"query dimension {vector.shape[0]} != index dimension {index.dimension}")
    scores = index.embeddings.astype(np.float64) @ vector
    n = min(n, len(scores))
    if n < len(scores):
        # Keep every row tied with the n-th best so the id tie-break is exact.
        cutoff = np.partition(scores, len(scores) - n)[len(scores) - n]
        candidates = np.flatnonzero(scores >= cutoff)
    else:
        candidates = np.arange(len(scores))
    order = np.lexsort((candidates, -scores[candidates]))[:n]
    return [(int(candidates[i]), float(scores[candidates[i]])) for i in order]


def candidate_pool(
    index: TripletIndex, query_vectors: np.ndarray, pool_width: int
) -> list[tuple[int, float]]:
    """Union of each query's top-``pool_width`` hits, max score per prop, globally sorted."""
    best: dict[int, float] = {}
    for vector in np.atleast_2d(query_vectors):
        for pid, score in search_topn(index, vector, pool_width):
            if pid not in best or score > best[pid]:
                best[pid] = score
    return sorted(best.items(), key=lambda item: (-item[1], item[0]))


def adaptive_retrieve_vectors(
    query_vectors: np.ndarray,
    index: TripletIndex,
    k: int,
    pool_width: int,
    *,
    exclude_chunks: Collection[str] = (),
) -> RetrievalResult:
    """Walk the ranked pool until ``k`` unique chunks are covered.

    If the pool runs dry first, ``pool_width`` is doubled and the pool
    rebuilt, up to the index size; ``exhausted`` is set only when even the
    full index cannot supply ``k`` chunks. Propositions whose chunk is in
    *exclude_chunks* are skipped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if pool_width < 1:
        raise ValueError("pool_width must be >= 1")
    width = pool_width
    while True:
        pool = candidate_pool(index, query_vectors, width)
        taken: list[tuple[int, float]] = []
        chunks: list[str] = []
        seen: set[str] = set()
        for pid, score in pool:
            if len(chunks) >= k:
                break
            chunk_id = index.chunk_of(pid)
            if chunk_id in exclude_chunks:
                continue
            taken.append((pid, score))
            if chunk_id not in seen:
                seen.add(chunk_id)
                chunks.append(chunk_id)
        if len(chunks) >= k or width >= len(index):
            return RetrievalResult(tuple(taken), tuple(chunks), len(chunks) < k, width, len(pool))
        width = min(width * 2, len(index))


def adaptive_retrieve(
    searchable: Sequence[Triplet],
    index: TripletIndex,
    k: int,
    embed: Embed,
    pool_width: int | None = None,
    *,
    exclude_chunks: Collection[str] = (),
) -> RetrievalResult:
    """Embed each searchable triplet's query proposition and retrieve adaptively."""
    if not searchable:
        raise ValueError("adaptive_retrieve needs at least one searchable triplet")
    return retrieve_texts(
        [query_proposition(t) for t in searchable], index, k, embed, pool_width, exclude_chunks=exclude_chunks
    )


def retrieve_texts(
    texts: Sequence[str],
    index: TripletIndex,
    k: int,
    embed: Embed,
    pool_width: int | None = None,
    *,
    exclude_chunks: Collection[str] = (),
) -> RetrievalResult:
    if len(index) == 0:
        return RetrievalResult((), (), True)
    vectors = embed(list(texts))
    return adaptive_retrieve_vectors(
        vectors, index, k, pool_width or 8 * k, exclude_chunks=exclude_chunks
    )
