"""Distance kernels.

All kernels accumulate in float64 regardless of input dtype; float32
accumulation loses digits around dim ~ 1000. Scalar kernels are the
reference semantics, batch_distances is the blocked equivalent used by
every scan and graph traversal.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, ZeroVector
from .types import DistanceMetric


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionMismatch("kernels take 1-d vectors")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(
            f"operands have {a.shape[0]} and {b.shape[0]} components"
        )


def euclidean_distance_sq(a: np.ndarray, b: np.ndarray) -> float:
    """Squared euclidean distance; the square root belongs at the API edge."""
    _check_pair(a, b)
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.dot(d, d))


def dot_product(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), clamped to [0, 2].

    Raises ZeroVector when either operand has zero norm.
    """
    _check_pair(a, b)
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    na = np.linalg.norm(a64)
    nb = np.linalg.norm(b64)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine distance undefined for zero vectors")
    d = 1.0 - float(np.dot(a64, b64)) / float(na * nb)
    return min(2.0, max(0.0, d))


def batch_distances(
    query: np.ndarray,
    block: np.ndarray,
    metric: DistanceMetric,
    assume_normalized: bool = False,
) -> np.ndarray:
    """Distances from one query to every row of a block.

    Args:
        query: 1-d vector.
        block: (n, dim) row-major matrix.
        metric: which kernel to apply.
        assume_normalized: for cosine, skip the norm terms; only valid
            when both sides are unit length, where cosine reduces to
            1 - dot.

    Returns:
        float64 array of length n; element i equals the scalar kernel
        applied to (query, block[i]) within 1e-5 relative.
    """
    if query.ndim != 1 or block.ndim != 2:
        raise DimensionMismatch("query must be 1-d and block 2-d")
    if block.shape[1] != query.shape[0]:
        raise DimensionMismatch(
            f"block rows have {block.shape[1]} components, query has {query.shape[0]}"
        )
    if block.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    q = query.astype(np.float64)
    rows = block.astype(np.float64)
    if metric is DistanceMetric.EUCLIDEAN:
        d = rows - q
        return np.einsum("ij,ij->i", d, d)
    dots = rows @ q
    if metric is DistanceMetric.DOT:
        return dots
    if assume_normalized:
        return np.clip(1.0 - dots, 0.0, 2.0)
    nq = np.linalg.norm(q)
    nr = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    if nq == 0.0 or np.any(nr == 0.0):
        raise ZeroVector("cosine distance undefined for zero vectors")
    return np.clip(1.0 - dots / (nq * nr), 0.0, 2.0)


def reported_distance(internal: float, metric: DistanceMetric) -> float:
    """Convert an internal ordering distance to the reported scale.

    Euclidean scans order by squared distance; reports take the root.
    Dot product is negated internally so ascending means more similar,
    and is reported in that negated form.
    """
    if metric is DistanceMetric.EUCLIDEAN:
        return float(np.sqrt(internal)) if internal > 0.0 else 0.0
    return float(internal)
