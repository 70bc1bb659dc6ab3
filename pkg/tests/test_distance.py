"""Distance kernel checks against independently written scalar oracles.

The oracles below accumulate with plain python floats in a sequential
loop, deliberately sharing no code with the numpy kernels they verify.
"""

import math

import numpy as np
import pytest

from vecdb.distance import (
    batch_distances,
    cosine_distance,
    dot_product,
    euclidean_distance_sq,
    reported_distance,
)
from vecdb.errors import DimensionMismatch, ZeroVector
from vecdb.types import DistanceMetric


def _euclid_sq_oracle(a, b) -> float:
    total = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        total += (float(x) - float(y)) ** 2
    return total


def _dot_oracle(a, b) -> float:
    total = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        total += float(x) * float(y)
    return total


def _cosine_oracle(a, b) -> float:
    na = math.sqrt(_dot_oracle(a, a))
    nb = math.sqrt(_dot_oracle(b, b))
    d = 1.0 - _dot_oracle(a, b) / (na * nb)
    return min(2.0, max(0.0, d))


def _random_pairs(rng, dim, count):
    for _ in range(count):
        a = rng.standard_normal(dim).astype(np.float32)
        b = rng.standard_normal(dim).astype(np.float32)
        yield a, b


class TestScalarKernels:
    @pytest.mark.parametrize("dim", [1, 2, 7, 8, 64, 256])
    def test_euclidean_matches_oracle(self, dim):
        rng = np.random.default_rng(dim)
        for a, b in _random_pairs(rng, dim, 20):
            got = euclidean_distance_sq(a, b)
            want = _euclid_sq_oracle(a, b)
            assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12)

    @pytest.mark.parametrize("dim", [1, 2, 7, 8, 64, 256])
    def test_dot_matches_oracle(self, dim):
        rng = np.random.default_rng(100 + dim)
        for a, b in _random_pairs(rng, dim, 20):
            got = dot_product(a, b)
            want = _dot_oracle(a, b)
            assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-9)

    @pytest.mark.parametrize("dim", [2, 7, 8, 64, 256])
    def test_cosine_matches_oracle(self, dim):
        rng = np.random.default_rng(200 + dim)
        for a, b in _random_pairs(rng, dim, 20):
            got = cosine_distance(a, b)
            want = _cosine_oracle(a, b)
            assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12)

    def test_euclidean_identity(self):
        a = np.array([1.5, -2.0, 3.25], dtype=np.float32)
        assert euclidean_distance_sq(a, a) == 0.0

    def test_cosine_bounds(self):
        a = np.array([1.0, 2.0, 3.0], dtype=np.float32)
        assert cosine_distance(a, a) == 0.0
        assert cosine_distance(a, -a) == 2.0
        ortho = np.array([0.0, 1.0], dtype=np.float32)
        base = np.array([1.0, 0.0], dtype=np.float32)
        assert abs(cosine_distance(base, ortho) - 1.0) < 1e-12

    def test_cosine_zero_vector(self):
        z = np.zeros(3, dtype=np.float32)
        a = np.ones(3, dtype=np.float32)
        with pytest.raises(ZeroVector):
            cosine_distance(z, a)
        with pytest.raises(ZeroVector):
            cosine_distance(a, z)

    def test_shape_errors(self):
        with pytest.raises(DimensionMismatch):
            euclidean_distance_sq(np.ones(3, np.float32), np.ones(4, np.float32))
        with pytest.raises(DimensionMismatch):
            dot_product(np.ones((2, 2), np.float32), np.ones(4, np.float32))


class TestBatchKernel:
    # block result element i must equal the scalar kernel on (query, row i)

    @pytest.mark.parametrize("dim", [1, 2, 7, 8, 64, 784])
    def test_euclidean_block_vs_scalar(self, dim):
        rng = np.random.default_rng(300 + dim)
        q = rng.standard_normal(dim).astype(np.float32)
        block = rng.standard_normal((50, dim)).astype(np.float32)
        got = batch_distances(q, block, DistanceMetric.EUCLIDEAN)
        assert got.dtype == np.float64
        for i in range(block.shape[0]):
            want = euclidean_distance_sq(q, block[i])
            assert abs(got[i] - want) <= 1e-5 * max(1.0, abs(want))

    @pytest.mark.parametrize("dim", [1, 2, 7, 8, 64, 784])
    def test_dot_block_vs_scalar(self, dim):
        rng = np.random.default_rng(400 + dim)
        q = rng.standard_normal(dim).astype(np.float32)
        block = rng.standard_normal((50, dim)).astype(np.float32)
        got = batch_distances(q, block, DistanceMetric.DOT)
        for i in range(block.shape[0]):
            want = dot_product(q, block[i])
            assert abs(got[i] - want) <= 1e-5 * max(1.0, abs(want))

    @pytest.mark.parametrize("dim", [2, 7, 8, 64, 784])
    def test_cosine_block_vs_scalar(self, dim):
        rng = np.random.default_rng(500 + dim)
        q = rng.standard_normal(dim).astype(np.float32)
        block = rng.standard_normal((50, dim)).astype(np.float32)
        got = batch_distances(q, block, DistanceMetric.COSINE)
        for i in range(block.shape[0]):
            want = cosine_distance(q, block[i])
            assert abs(got[i] - want) <= 1e-5 * max(1.0, abs(want))

    def test_cosine_normalized_shortcut(self):
        rng = np.random.default_rng(9)
        dim = 32
        q = rng.standard_normal(dim)
        q = (q / np.linalg.norm(q)).astype(np.float32)
        block = rng.standard_normal((40, dim))
        block = (block / np.linalg.norm(block, axis=1, keepdims=True)).astype(
            np.float32
        )
        fast = batch_distances(q, block, DistanceMetric.COSINE, assume_normalized=True)
        for i in range(block.shape[0]):
            want = cosine_distance(q, block[i])
            assert abs(fast[i] - want) <= 1e-5

    def test_empty_block(self):
        q = np.ones(4, dtype=np.float32)
        out = batch_distances(q, np.zeros((0, 4), np.float32), DistanceMetric.EUCLIDEAN)
        assert out.shape == (0,)

    def test_zero_vector_in_cosine_block(self):
        q = np.ones(3, dtype=np.float32)
        block = np.array([[1, 2, 3], [0, 0, 0]], dtype=np.float32)
        with pytest.raises(ZeroVector):
            batch_distances(q, block, DistanceMetric.COSINE)

    def test_shape_errors(self):
        q = np.ones(3, dtype=np.float32)
        with pytest.raises(DimensionMismatch):
            batch_distances(q, np.ones((2, 4), np.float32), DistanceMetric.DOT)
        with pytest.raises(DimensionMismatch):
            batch_distances(np.ones((2, 3), np.float32), np.ones((2, 3), np.float32),
                            DistanceMetric.DOT)


class TestReportedDistance:
    def test_euclidean_takes_root(self):
        assert reported_distance(25.0, DistanceMetric.EUCLIDEAN) == 5.0
        assert reported_distance(0.0, DistanceMetric.EUCLIDEAN) == 0.0
        # tiny negatives from float cancellation clamp to zero
        assert reported_distance(-1e-18, DistanceMetric.EUCLIDEAN) == 0.0

    def test_other_metrics_pass_through(self):
        assert reported_distance(0.25, DistanceMetric.COSINE) == 0.25
        assert reported_distance(-3.5, DistanceMetric.DOT) == -3.5
