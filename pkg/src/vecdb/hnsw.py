"""Hierarchical navigable small world graph for approximate search.

Nodes live on layers 0..level, with level drawn from a geometric-like
distribution so layer membership thins exponentially. Queries descend
greedily through the sparse upper layers and run a best-first bounded
search on layer 0. Deletes only tombstone: the node keeps routing but
never appears in results.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .distance import batch_distances
from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyGraph,
    InvalidConfig,
    InvalidQuery,
    ZeroVector,
)
from .types import DistanceMetric, SearchResult, SearchStats

DEFAULT_EF = 64


class HnswIndex:
    """Graph index over float32 rows.

    Args:
        dim: vector dimensionality.
        metric: distance used for ordering (dot is negated internally).
        m: max neighbors per node on upper layers; layer 0 allows 2m.
        ef_construction: beam width while linking a new node.
        seed: level generator seed; same insert order + seed + params
            reproduces the graph exactly.
        assume_normalized: rows are unit length, cosine becomes 1 - dot.
    """

    def __init__(
        self,
        dim: int,
        metric: DistanceMetric = DistanceMetric.COSINE,
        m: int = 16,
        ef_construction: int = 200,
        seed: int = 0,
        assume_normalized: bool = False,
    ):
        if m < 2:
            raise InvalidConfig(f"m must be >= 2, got {m}")
        if ef_construction < m:
            raise InvalidConfig(
                f"ef_construction must be >= m, got {ef_construction}"
            )
        self.dim = dim
        self.metric = metric
        self.assume_normalized = assume_normalized
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.seed = seed
        self._mult = 1.0 / math.log(m)
        self._rng = np.random.default_rng(seed)
        self._vectors = np.zeros((0, dim), dtype=np.float32)
        self._ids = np.zeros(0, dtype=np.uint64)
        self._deleted = np.zeros(0, dtype=bool)
        self._levels: list[int] = []
        self._neighbors: list[list[list[int]]] = []  # row -> layer -> rows
        self._row_of: dict[int, int] = {}
        self._n = 0
        self._n_deleted = 0
        self._entry: int | None = None
        self._max_level = -1

    def __len__(self) -> int:
        return len(self._row_of)

    def __contains__(self, id: int) -> bool:
        return id in self._row_of

    @property
    def node_count(self) -> int:
        """All rows including tombstones."""
        return self._n

    def live_ids(self) -> list[int]:
        return list(self._row_of.keys())

    def vector_of(self, id: int) -> np.ndarray:
        return self._vectors[self._row_of[id]]

    def gather(self, ids) -> np.ndarray:
        rows = [self._row_of[i] for i in ids]
        return self._vectors[rows]

    # ------------------------------------------------------------ internals

    def _draw_level(self) -> int:
        # geometric-ish: P(level >= L) = M^-L
        return int(-math.log(1.0 - self._rng.random()) * self._mult)

    def _dist_rows(self, q: np.ndarray, rows: list[int]) -> np.ndarray:
        d = batch_distances(
            q, self._vectors[rows], self.metric, self.assume_normalized
        )
        return -d if self.metric is DistanceMetric.DOT else d

    def _pairwise(self, rows: list[int]) -> np.ndarray:
        """All-pairs internal distances among the given rows, float64."""
        x = self._vectors[rows].astype(np.float64)
        g = x @ x.T
        if self.metric is DistanceMetric.DOT:
            return -g
        if self.metric is DistanceMetric.EUCLIDEAN:
            n2 = np.einsum("ij,ij->i", x, x)
            return np.maximum(n2[:, None] + n2[None, :] - 2.0 * g, 0.0)
        if self.assume_normalized:
            return np.clip(1.0 - g, 0.0, 2.0)
        norms = np.sqrt(np.einsum("ij,ij->i", x, x))
        if np.any(norms == 0.0):
            raise ZeroVector("cosine distance undefined for zero vectors")
        return np.clip(1.0 - g / np.outer(norms, norms), 0.0, 2.0)

    def _select_from(self, cand: list[tuple[float, int]], m: int) -> list[int]:
        """Diversity heuristic over candidates sorted ascending.

        A candidate is kept only when it is closer to the target than to
        every already-kept neighbor; if fewer than m survive, the nearest
        rejected ones fill the remainder.
        """
        if len(cand) <= 1 or len(cand) <= m:
            out = [r for _, r in cand]
            return out[:m]
        rows = [r for _, r in cand]
        d_new = np.fromiter((d for d, _ in cand), dtype=np.float64, count=len(cand))
        pair = self._pairwise(rows)
        kept: list[int] = []
        rejected: list[int] = []
        for i in range(len(rows)):
            if len(kept) == m:
                break
            if not kept or bool(np.all(pair[i, kept] > d_new[i])):
                kept.append(i)
            else:
                rejected.append(i)
        if len(kept) < m:
            kept.extend(rejected[: m - len(kept)])
            kept.sort()
        return [rows[i] for i in kept]

    def _greedy(
        self, q: np.ndarray, ep: int, ep_dist: float, layer: int, stats: SearchStats
    ) -> tuple[int, float]:
        """Follow the single best neighbor until no improvement."""
        while True:
            nbrs = self._neighbors[ep][layer]
            if not nbrs:
                return ep, ep_dist
            dists = self._dist_rows(q, nbrs)
            stats.distance_evals += len(nbrs)
            j = int(np.argmin(dists))
            if dists[j] < ep_dist:
                ep = nbrs[j]
                ep_dist = float(dists[j])
                stats.visited += 1
            else:
                return ep, ep_dist

    def _search_layer(
        self,
        q: np.ndarray,
        eps: list[tuple[float, int]],
        ef: int,
        layer: int,
        visible: np.ndarray | None,
        stats: SearchStats,
    ) -> list[tuple[float, int]]:
        """Best-first beam search on one layer.

        Nodes failing the visibility mask still route (their neighbors
        are expanded) but are never admitted to the result set.
        """
        visited = np.zeros(self._n, dtype=bool)
        cand: list[tuple[float, int]] = []
        res: list[tuple[float, int]] = []  # max-heap via negated distance
        for d, r in eps:
            if visited[r]:
                continue
            visited[r] = True
            heapq.heappush(cand, (d, r))
            if visible is None or visible[r]:
                heapq.heappush(res, (-d, r))
        while len(res) > ef:
            heapq.heappop(res)
        while cand:
            d, cur = heapq.heappop(cand)
            if len(res) == ef and d > -res[0][0]:
                break
            stats.visited += 1
            nbrs = [nb for nb in self._neighbors[cur][layer] if not visited[nb]]
            if not nbrs:
                continue
            for nb in nbrs:
                visited[nb] = True
            dists = self._dist_rows(q, nbrs)
            stats.distance_evals += len(nbrs)
            bound = -res[0][0] if len(res) == ef else math.inf
            for nd, nb in zip(dists.tolist(), nbrs):
                if len(res) < ef or nd < bound:
                    heapq.heappush(cand, (nd, nb))
                    if visible is None or visible[nb]:
                        heapq.heappush(res, (-nd, nb))
                        if len(res) > ef:
                            heapq.heappop(res)
                        if len(res) == ef:
                            bound = -res[0][0]
        out = [(-nd, r) for nd, r in res]
        out.sort()
        return out

    def _alloc(self, id: int, vector: np.ndarray, level: int) -> int:
        if self._n == self._vectors.shape[0]:
            cap = max(8, self._vectors.shape[0] * 2)
            grown = np.zeros((cap, self.dim), dtype=np.float32)
            grown[: self._n] = self._vectors[: self._n]
            self._vectors = grown
            gids = np.zeros(cap, dtype=np.uint64)
            gids[: self._n] = self._ids[: self._n]
            self._ids = gids
            gdel = np.zeros(cap, dtype=bool)
            gdel[: self._n] = self._deleted[: self._n]
            self._deleted = gdel
        row = self._n
        self._vectors[row] = vector
        self._ids[row] = id
        self._levels.append(level)
        self._neighbors.append([[] for _ in range(level + 1)])
        self._row_of[id] = row
        self._n += 1
        return row

    # ------------------------------------------------------------- mutation

    def insert(self, id: int, vector: np.ndarray) -> None:
        """Link a new node; neighbors chosen by the diversity heuristic.

        Raises DuplicateId for a live id and DimensionMismatch on shape.
        """
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
        level = self._draw_level()
        row = self._alloc(id, vector, level)
        if self._entry is None:
            self._entry = row
            self._max_level = level
            return
        q = self._vectors[row]
        stats = SearchStats()
        ep = self._entry
        ep_dist = float(self._dist_rows(q, [ep])[0])
        for lc in range(self._max_level, level, -1):
            ep, ep_dist = self._greedy(q, ep, ep_dist, lc, stats)
        eps = [(ep_dist, ep)]
        for lc in range(min(level, self._max_level), -1, -1):
            w = self._search_layer(q, eps, self.ef_construction, lc, None, stats)
            sel = self._select_from(w, self.m)
            self._neighbors[row][lc] = sel
            cap = self.m0 if lc == 0 else self.m
            for nb in sel:
                lst = self._neighbors[nb][lc]
                lst.append(row)
                if len(lst) > cap:
                    d_nb = self._dist_rows(self._vectors[nb], lst)
                    order = sorted(zip(d_nb.tolist(), lst))
                    self._neighbors[nb][lc] = self._select_from(order, cap)
            eps = w
        if level >= self._max_level:
            # ties at the top go to the later insert
            self._entry = row
            self._max_level = level

    def delete(self, id: int) -> bool:
        """Tombstone: the node keeps routing but leaves the result set."""
        row = self._row_of.pop(id, None)
        if row is None:
            return False
        self._deleted[row] = True
        self._n_deleted += 1
        return True

    # -------------------------------------------------------------- queries

    def search(
        self,
        query: np.ndarray,
        k: int,
        ef: int | None = None,
        allowed_ids=None,
    ) -> SearchResult:
        """Approximate top-k.

        Args:
            query: vector of the index dimensionality.
            k: result count, >= 1.
            ef: beam width, clamped up to k; defaults to max(k, 64).
            allowed_ids: optional id set; anything else is routed through
                but never returned.

        Raises EmptyGraph when nothing was ever inserted.
        """
        if k < 1:
            raise InvalidQuery(f"k must be >= 1, got {k}")
        if query.shape[0] != self.dim:
            raise DimensionMismatch(
                f"query has {query.shape[0]} components, index requires {self.dim}"
            )
        if self._entry is None:
            raise EmptyGraph("search on an empty graph")
        ef = max(ef if ef is not None else max(k, DEFAULT_EF), k)
        q = np.asarray(query, dtype=np.float32)
        visible: np.ndarray | None = None
        if allowed_ids is not None:
            visible = np.zeros(self._n, dtype=bool)
            rows = [self._row_of[i] for i in allowed_ids if i in self._row_of]
            visible[rows] = True
        elif self._n_deleted > 0:
            visible = ~self._deleted[: self._n]
        stats = SearchStats()
        ep = self._entry
        ep_dist = float(self._dist_rows(q, [ep])[0])
        stats.distance_evals += 1
        for lc in range(self._max_level, 0, -1):
            ep, ep_dist = self._greedy(q, ep, ep_dist, lc, stats)
        res = self._search_layer(q, [(ep_dist, ep)], ef, 0, visible, stats)
        top = res[:k]
        hits = [(int(self._ids[r]), float(d)) for d, r in top]
        hits.sort(key=lambda h: (h[1], h[0]))
        return SearchResult(hits=hits, stats=stats)

    def select_neighbors(self, target: np.ndarray, candidate_ids, m: int) -> list[int]:
        """Public form of the selection heuristic, id in, id out."""
        rows = [self._row_of[i] for i in candidate_ids]
        dists = self._dist_rows(np.asarray(target, dtype=np.float32), rows)
        order = sorted(zip(dists.tolist(), rows))
        return [int(self._ids[r]) for r in self._select_from(order, m)]

    # ---------------------------------------------------------- persistence

    def get_state(self) -> dict:
        """Structural state for serialization, arrays in row order."""
        return {
            "dim": self.dim,
            "metric": self.metric,
            "assume_normalized": self.assume_normalized,
            "m": self.m,
            "ef_construction": self.ef_construction,
            "seed": self.seed,
            "rng_state": self._rng.bit_generator.state,
            "n": self._n,
            "entry": self._entry,
            "max_level": self._max_level,
            "ids": self._ids[: self._n].copy(),
            "deleted": self._deleted[: self._n].copy(),
            "levels": list(self._levels),
            "neighbors": self._neighbors,
            "vectors": self._vectors[: self._n].copy(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "HnswIndex":
        idx = cls(
            dim=state["dim"],
            metric=state["metric"],
            m=state["m"],
            ef_construction=state["ef_construction"],
            seed=state["seed"],
            assume_normalized=state["assume_normalized"],
        )
        n = state["n"]
        idx._n = n
        idx._vectors = state["vectors"].copy()
        idx._ids = state["ids"].copy()
        idx._deleted = state["deleted"].copy()
        idx._levels = list(state["levels"])
        idx._neighbors = [
            [list(nbrs) for nbrs in per_level] for per_level in state["neighbors"]
        ]
        idx._entry = state["entry"]
        idx._max_level = state["max_level"]
        idx._n_deleted = int(state["deleted"].sum())
        idx._row_of = {
            int(idx._ids[r]): r for r in range(n) if not idx._deleted[r]
        }
        idx._rng.bit_generator.state = state["rng_state"]
        return idx
