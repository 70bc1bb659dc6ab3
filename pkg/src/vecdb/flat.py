"""Exact brute-force index: the correctness baseline everything else is
measured against."""

from __future__ import annotations

import numpy as np

from .distance import batch_distances
from .errors import DimensionMismatch, DuplicateId, InvalidQuery, ZeroVector
from .types import DistanceMetric, SearchResult, SearchStats

_CHUNK = 4096


def exact_topk(
    vectors: np.ndarray,
    ids: np.ndarray,
    query: np.ndarray,
    k: int,
    metric: DistanceMetric,
    assume_normalized: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Top k rows by distance, ties broken by lower id.

    Scans in contiguous chunks through the batch kernel. Dot product is
    negated so ascending order means more similar.

    Returns:
        (ids, internal distances), both length min(k, n), ascending by
        (distance, id).
    """
    n = vectors.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.float64)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dists[start:stop] = batch_distances(
            query, vectors[start:stop], metric, assume_normalized
        )
    if metric is DistanceMetric.DOT:
        dists = -dists
    if k >= n:
        order = np.lexsort((ids, dists))
        return ids[order], dists[order]
    part = np.argpartition(dists, k - 1)[:k]
    # pull in every row tied with the boundary so the id tie rule can act
    boundary = dists[part].max()
    cand = np.flatnonzero(dists <= boundary)
    order = cand[np.lexsort((ids[cand], dists[cand]))][:k]
    return ids[order], dists[order]


class FlatIndex:
    """Contiguous float32 rows plus an id map; delete is swap-remove."""

    def __init__(
        self,
        dim: int,
        metric: DistanceMetric = DistanceMetric.COSINE,
        assume_normalized: bool = False,
    ):
        self.dim = dim
        self.metric = metric
        self.assume_normalized = assume_normalized
        self._vectors = np.zeros((0, dim), dtype=np.float32)
        self._ids = np.zeros(0, dtype=np.uint64)
        self._n = 0
        self._row_of: dict[int, int] = {}

    @classmethod
    def from_arrays(
        cls,
        dim: int,
        metric: DistanceMetric,
        assume_normalized: bool,
        ids: np.ndarray,
        vectors: np.ndarray,
    ) -> "FlatIndex":
        """Rebuild from stored row order without touching row placement."""
        idx = cls(dim, metric, assume_normalized)
        idx._n = ids.shape[0]
        idx._ids = ids.astype(np.uint64)
        idx._vectors = vectors.astype(np.float32)
        idx._row_of = {int(ids[r]): r for r in range(idx._n)}
        return idx

    def __len__(self) -> int:
        return self._n

    def __contains__(self, id: int) -> bool:
        return id in self._row_of

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors[: self._n]

    @property
    def ids(self) -> np.ndarray:
        return self._ids[: self._n]

    def insert(self, id: int, vector: np.ndarray) -> None:
        if id in self._row_of:
            raise DuplicateId(f"id {id} already present")
        if vector.shape[0] != self.dim:
            raise DimensionMismatch(
                f"vector has {vector.shape[0]} components, index requires {self.dim}"
            )
        if (
            self.metric is DistanceMetric.COSINE
            and not self.assume_normalized
            and not np.any(vector)
        ):
            raise ZeroVector("cosine index rejects all-zero vectors")
        if self._n == self._vectors.shape[0]:
            cap = max(8, self._vectors.shape[0] * 2)
            grown = np.zeros((cap, self.dim), dtype=np.float32)
            grown[: self._n] = self._vectors[: self._n]
            self._vectors = grown
            gids = np.zeros(cap, dtype=np.uint64)
            gids[: self._n] = self._ids[: self._n]
            self._ids = gids
        self._vectors[self._n] = vector
        self._ids[self._n] = id
        self._row_of[id] = self._n
        self._n += 1

    def delete(self, id: int) -> bool:
        row = self._row_of.pop(id, None)
        if row is None:
            return False
        last = self._n - 1
        if row != last:
            self._vectors[row] = self._vectors[last]
            moved = int(self._ids[last])
            self._ids[row] = moved
            self._row_of[moved] = row
        self._n = last
        return True

    def vector_of(self, id: int) -> np.ndarray:
        return self._vectors[self._row_of[id]]

    def gather(self, ids) -> np.ndarray:
        rows = [self._row_of[i] for i in ids]
        return self._vectors[rows]

    def search(self, query: np.ndarray, k: int, allowed_ids=None) -> SearchResult:
        """Exact top-k scan, optionally restricted to an id subset.

        Every stored (or allowed) row is evaluated exactly once.
        """
        if k < 1:
            raise InvalidQuery(f"k must be >= 1, got {k}")
        if query.shape[0] != self.dim:
            raise DimensionMismatch(
                f"query has {query.shape[0]} components, index requires {self.dim}"
            )
        if allowed_ids is None:
            vectors = self.vectors
            ids = self.ids
        else:
            rows = [self._row_of[i] for i in allowed_ids if i in self._row_of]
            rows.sort()
            vectors = self._vectors[rows]
            ids = self._ids[rows]
        top_ids, top_dists = exact_topk(
            vectors, ids, query, k, self.metric, self.assume_normalized
        )
        hits = [(int(i), float(d)) for i, d in zip(top_ids, top_dists)]
        n = vectors.shape[0]
        return SearchResult(hits=hits, stats=SearchStats(distance_evals=n, visited=n))
