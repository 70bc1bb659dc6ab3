"""Exact index checks against a naive pure-python top-k oracle."""

import math

import numpy as np
import pytest

from vecdb.errors import DimensionMismatch, DuplicateId, InvalidQuery, ZeroVector
from vecdb.flat import FlatIndex, exact_topk
from vecdb.types import DistanceMetric


def _scalar(metric, a, b) -> float:
    da = [float(x) for x in a.tolist()]
    db = [float(x) for x in b.tolist()]
    if metric is DistanceMetric.EUCLIDEAN:
        return sum((x - y) ** 2 for x, y in zip(da, db))
    dot = sum(x * y for x, y in zip(da, db))
    if metric is DistanceMetric.DOT:
        return -dot  # internal ordering negates similarity
    na = math.sqrt(sum(x * x for x in da))
    nb = math.sqrt(sum(y * y for y in db))
    return min(2.0, max(0.0, 1.0 - dot / (na * nb)))


def _naive_topk(vectors, ids, query, k, metric):
    scored = [
        (_scalar(metric, query, vectors[r]), int(ids[r]))
        for r in range(vectors.shape[0])
    ]
    scored.sort()
    return [(id, d) for d, id in scored[:k]]


def _make(rng, n, dim, metric=DistanceMetric.EUCLIDEAN):
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    ids = rng.permutation(n * 3)[:n].astype(np.uint64)
    index = FlatIndex(dim, metric)
    for r in range(n):
        index.insert(int(ids[r]), vectors[r])
    return index, vectors, ids


class TestExactTopk:
    @pytest.mark.parametrize(
        "metric",
        [DistanceMetric.EUCLIDEAN, DistanceMetric.COSINE, DistanceMetric.DOT],
    )
    def test_matches_naive_oracle(self, metric):
        seeds = {"euclidean": 31, "cosine": 32, "dot": 33}
        rng = np.random.default_rng(seeds[metric.value])
        vectors = rng.standard_normal((200, 16)).astype(np.float32)
        ids = np.arange(1000, 1200, dtype=np.uint64)
        for trial in range(10):
            q = rng.standard_normal(16).astype(np.float32)
            got_ids, got_d = exact_topk(vectors, ids, q, 7, metric)
            want = _naive_topk(vectors, ids, q, 7, metric)
            assert [int(i) for i in got_ids] == [id for id, _ in want]
            for g, (_, w) in zip(got_d.tolist(), want):
                assert abs(g - w) <= 1e-9 * max(1.0, abs(w))

    def test_tie_breaks_by_lower_id(self):
        v = np.ones((4, 3), dtype=np.float32)
        ids = np.array([42, 7, 99, 13], dtype=np.uint64)
        got_ids, _ = exact_topk(v, ids, np.ones(3, np.float32), 3,
                                DistanceMetric.EUCLIDEAN)
        assert got_ids.tolist() == [7, 13, 42]

    def test_boundary_tie_not_dropped_by_partition(self):
        # rows tied exactly at the k-th distance must resolve by id even
        # when argpartition would have split them arbitrarily
        base = np.zeros((10, 2), dtype=np.float32)
        base[:5] = [1.0, 0.0]   # distance 1, ids 50..54
        base[5:] = [2.0, 0.0]   # distance 4, ids 10..14
        ids = np.array([54, 53, 52, 51, 50, 14, 13, 12, 11, 10], dtype=np.uint64)
        got_ids, got_d = exact_topk(
            base, ids, np.zeros(2, np.float32), 7, DistanceMetric.EUCLIDEAN
        )
        assert got_ids.tolist() == [50, 51, 52, 53, 54, 10, 11]
        assert got_d.tolist() == [1.0] * 5 + [4.0] * 2

    def test_k_larger_than_n_returns_all(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((5, 4)).astype(np.float32)
        ids = np.arange(5, dtype=np.uint64)
        got_ids, got_d = exact_topk(v, ids, v[0], 50, DistanceMetric.EUCLIDEAN)
        assert len(got_ids) == 5
        assert got_d.tolist() == sorted(got_d.tolist())

    def test_empty(self):
        got_ids, got_d = exact_topk(
            np.zeros((0, 4), np.float32), np.zeros(0, np.uint64),
            np.zeros(4, np.float32), 3, DistanceMetric.EUCLIDEAN,
        )
        assert len(got_ids) == 0 and len(got_d) == 0

    def test_dot_is_negated_for_ordering(self):
        v = np.array([[1.0, 0.0], [3.0, 0.0], [2.0, 0.0]], dtype=np.float32)
        ids = np.array([1, 2, 3], dtype=np.uint64)
        got_ids, got_d = exact_topk(v, ids, np.array([1.0, 0.0], np.float32),
                                    3, DistanceMetric.DOT)
        assert got_ids.tolist() == [2, 3, 1]
        assert got_d.tolist() == [-3.0, -2.0, -1.0]

    def test_spans_multiple_chunks(self):
        # more rows than one scan chunk (4096)
        rng = np.random.default_rng(5)
        n = 5000
        vectors = rng.standard_normal((n, 4)).astype(np.float32)
        ids = np.arange(n, dtype=np.uint64)
        q = rng.standard_normal(4).astype(np.float32)
        got_ids, got_d = exact_topk(vectors, ids, q, 5, DistanceMetric.EUCLIDEAN)
        want = _naive_topk(vectors, ids, q, 5, DistanceMetric.EUCLIDEAN)
        assert [int(i) for i in got_ids] == [id for id, _ in want]


class TestFlatIndex:
    def test_search_matches_oracle_after_churn(self):
        rng = np.random.default_rng(7)
        index, vectors, ids = _make(rng, 150, 8)
        # delete a third, keep a live map for the oracle
        live = {int(ids[r]): vectors[r] for r in range(150)}
        for id in [int(i) for i in ids[::3]]:
            assert index.delete(id)
            del live[id]
        assert len(index) == len(live)
        q = rng.standard_normal(8).astype(np.float32)
        res = index.search(q, 10)
        lids = np.array(sorted(live), dtype=np.uint64)
        lvecs = np.stack([live[int(i)] for i in lids])
        want = _naive_topk(lvecs, lids, q, 10, DistanceMetric.EUCLIDEAN)
        assert [id for id, _ in res.hits] == [id for id, _ in want]
        assert res.stats.distance_evals == len(live)

    def test_allowed_ids_restricts_results(self):
        rng = np.random.default_rng(8)
        index, vectors, ids = _make(rng, 60, 4)
        allowed = [int(i) for i in ids[:20]] + [999999]  # unknown id ignored
        q = rng.standard_normal(4).astype(np.float32)
        res = index.search(q, 30, allowed_ids=allowed)
        assert len(res.hits) == 20
        assert {id for id, _ in res.hits} <= set(allowed)
        lids = np.array(sorted(int(i) for i in ids[:20]), dtype=np.uint64)
        rows = {int(ids[r]): vectors[r] for r in range(60)}
        lvecs = np.stack([rows[int(i)] for i in lids])
        want = _naive_topk(lvecs, lids, q, 30, DistanceMetric.EUCLIDEAN)
        assert [id for id, _ in res.hits] == [id for id, _ in want]

    def test_duplicate_insert_raises(self):
        index = FlatIndex(2, DistanceMetric.EUCLIDEAN)
        index.insert(1, np.zeros(2, np.float32))
        with pytest.raises(DuplicateId):
            index.insert(1, np.ones(2, np.float32))

    def test_dim_mismatch(self):
        index = FlatIndex(3, DistanceMetric.EUCLIDEAN)
        with pytest.raises(DimensionMismatch):
            index.insert(1, np.zeros(2, np.float32))
        index.insert(1, np.zeros(3, np.float32))
        with pytest.raises(DimensionMismatch):
            index.search(np.zeros(2, np.float32), 1)

    def test_cosine_rejects_zero_vector(self):
        index = FlatIndex(3, DistanceMetric.COSINE)
        with pytest.raises(ZeroVector):
            index.insert(1, np.zeros(3, np.float32))

    def test_k_must_be_positive(self):
        index = FlatIndex(2, DistanceMetric.EUCLIDEAN)
        index.insert(1, np.ones(2, np.float32))
        with pytest.raises(InvalidQuery):
            index.search(np.ones(2, np.float32), 0)

    def test_delete_unknown_returns_false(self):
        index = FlatIndex(2, DistanceMetric.EUCLIDEAN)
        assert not index.delete(5)

    def test_swap_remove_keeps_vector_map(self):
        rng = np.random.default_rng(9)
        index, vectors, ids = _make(rng, 30, 4)
        index.delete(int(ids[0]))
        for r in range(1, 30):
            assert np.array_equal(index.vector_of(int(ids[r])), vectors[r])

    def test_from_arrays_round_trip(self):
        rng = np.random.default_rng(10)
        index, vectors, ids = _make(rng, 40, 6)
        rebuilt = FlatIndex.from_arrays(
            6, DistanceMetric.EUCLIDEAN, False, index.ids.copy(),
            index.vectors.copy(),
        )
        assert np.array_equal(rebuilt.ids, index.ids)
        assert np.array_equal(rebuilt.vectors, index.vectors)
        q = rng.standard_normal(6).astype(np.float32)
        assert rebuilt.search(q, 5).hits == index.search(q, 5).hits

    def test_gather_keeps_requested_order(self):
        rng = np.random.default_rng(11)
        index, vectors, ids = _make(rng, 20, 4)
        pick = [int(ids[7]), int(ids[2]), int(ids[15])]
        got = index.gather(pick)
        assert np.array_equal(got[0], index.vector_of(pick[0]))
        assert np.array_equal(got[1], index.vector_of(pick[1]))
        assert np.array_equal(got[2], index.vector_of(pick[2]))
