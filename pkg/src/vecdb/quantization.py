"""Vector compression: product quantization and binary quantization.

Product quantization splits a vector into m contiguous sub-vectors and
replaces each with the index of its nearest centroid out of k learned
per sub-space, one byte per sub-vector. Binary quantization projects a
vector onto m random hyperplanes and keeps only the sign bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CodeOutOfRange,
    DimensionMismatch,
    LengthMismatch,
    NotDivisible,
    TooFewTrainingVectors,
)


# ---------------------------------------------------------------- k-means


def _kmeans_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding. Deterministic given the generator state."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    d2 = np.einsum("ij,ij->i", x - centroids[0], x - centroids[0])
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining points coincide with a chosen centroid
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centroids[i] = x[idx]
        nd = np.einsum("ij,ij->i", x - centroids[i], x - centroids[i])
        np.minimum(d2, nd, out=d2)
    return centroids


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row, ties to the lowest centroid index."""
    # ||x-c||^2 = ||x||^2 - 2 x.c + ||c||^2; the ||x||^2 term is constant
    # per row and cannot change the argmin, so it is dropped.
    dots = x @ centroids.T
    cn = np.einsum("ij,ij->i", centroids, centroids)
    return np.argmin(cn[None, :] - 2.0 * dots, axis=1)


def kmeans(
    x: np.ndarray, k: int, max_iters: int = 25, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Args:
        x: (n, d) training rows, n >= k.
        k: number of centroids.
        max_iters: iteration cap; also stops when assignments are stable.
        seed: generator seed, same seed + data -> same output.

    Returns:
        (centroids (k, d) float64, assignments (n,), per-iteration SSE
        history in float64). The history is non-increasing.
    """
    n = x.shape[0]
    if n < k:
        raise TooFewTrainingVectors(f"need at least {k} rows, got {n}")
    x = x.astype(np.float64)
    rng = np.random.default_rng(seed)
    centroids = _kmeans_seed(x, k, rng)
    assign = _assign(x, centroids)
    history: list[float] = []
    for _ in range(max_iters):
        # repair empty clusters: steal the farthest point of the largest
        # cluster, ties to the lowest index
        sizes = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(sizes == 0):
            big = int(np.argmax(sizes))
            members = np.flatnonzero(assign == big)
            far_local = int(
                np.argmax(
                    np.einsum(
                        "ij,ij->i",
                        x[members] - centroids[big],
                        x[members] - centroids[big],
                    )
                )
            )
            point = members[far_local]
            assign[point] = empty
            centroids[empty] = x[point]
            sizes = np.bincount(assign, minlength=k)
        for c in range(k):
            centroids[c] = x[assign == c].mean(axis=0)
        history.append(
            float(
                np.einsum(
                    "ij,ij->i", x - centroids[assign], x - centroids[assign]
                ).sum()
            )
        )
        new_assign = _assign(x, centroids)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centroids, assign, history


# ------------------------------------------------- product quantization


@dataclass
class PqCodebook:
    """Learned centroids, shape (m, k, dim // m), float32."""

    centroids: np.ndarray

    @property
    def m(self) -> int:
        return self.centroids.shape[0]

    @property
    def k(self) -> int:
        return self.centroids.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def dim(self) -> int:
        return self.m * self.sub_dim


def pq_train(
    vectors: np.ndarray, m: int, k: int, max_iters: int = 25, seed: int = 0
) -> PqCodebook:
    """Train one k-means per sub-space over the training rows.

    Sub-spaces get independent deterministic seed streams, so the whole
    codebook is reproducible from (vectors, m, k, seed).
    """
    if vectors.ndim != 2:
        raise DimensionMismatch("training input must be (n, dim)")
    n, dim = vectors.shape
    if dim % m != 0:
        raise NotDivisible(f"m {m} does not divide dim {dim}")
    if not (2 <= k <= 256):
        raise CodeOutOfRange(f"k must be in [2, 256] to fit one byte, got {k}")
    if n < k:
        raise TooFewTrainingVectors(f"need at least {k} training rows, got {n}")
    sub = dim // m
    seeds = np.random.SeedSequence(seed).spawn(m)
    cents = np.empty((m, k, sub), dtype=np.float32)
    for j in range(m):
        block = vectors[:, j * sub : (j + 1) * sub]
        cj, _, _ = kmeans(block, k, max_iters=max_iters, seed=seeds[j])
        cents[j] = cj.astype(np.float32)
    return PqCodebook(centroids=cents)


def pq_encode(vector: np.ndarray, cb: PqCodebook) -> np.ndarray:
    """Code for one vector: per sub-space nearest centroid index, uint8."""
    return pq_encode_batch(vector[None, :], cb)[0]


def pq_encode_batch(vectors: np.ndarray, cb: PqCodebook) -> np.ndarray:
    """Codes for (n, dim) rows -> (n, m) uint8, ties to lowest index."""
    if vectors.shape[1] != cb.dim:
        raise DimensionMismatch(
            f"rows have {vectors.shape[1]} components, codebook expects {cb.dim}"
        )
    n = vectors.shape[0]
    codes = np.empty((n, cb.m), dtype=np.uint8)
    x = vectors.astype(np.float64)
    for j in range(cb.m):
        block = x[:, j * cb.sub_dim : (j + 1) * cb.sub_dim]
        codes[:, j] = _assign(block, cb.centroids[j].astype(np.float64))
    return codes


def pq_decode(code: np.ndarray, cb: PqCodebook) -> np.ndarray:
    """Reconstruct the approximation: concatenated chosen centroids."""
    if code.shape[0] != cb.m:
        raise LengthMismatch(f"code has {code.shape[0]} entries, expected {cb.m}")
    if np.any(code >= cb.k):
        raise CodeOutOfRange(f"code entry out of range for k={cb.k}")
    return np.concatenate(
        [cb.centroids[j, int(code[j])] for j in range(cb.m)]
    ).astype(np.float32)


def pq_lookup_table(query: np.ndarray, cb: PqCodebook) -> np.ndarray:
    """(m, k) table of squared distances from query sub-vectors to centroids."""
    if query.shape[0] != cb.dim:
        raise DimensionMismatch(
            f"query has {query.shape[0]} components, codebook expects {cb.dim}"
        )
    q = query.astype(np.float64)
    lut = np.empty((cb.m, cb.k), dtype=np.float64)
    for j in range(cb.m):
        diff = cb.centroids[j].astype(np.float64) - q[j * cb.sub_dim : (j + 1) * cb.sub_dim]
        lut[j] = np.einsum("ij,ij->i", diff, diff)
    return lut


def pq_dot_table(query: np.ndarray, cb: PqCodebook) -> np.ndarray:
    """(m, k) table of dot products, for dot-metric candidate scans."""
    if query.shape[0] != cb.dim:
        raise DimensionMismatch(
            f"query has {query.shape[0]} components, codebook expects {cb.dim}"
        )
    q = query.astype(np.float64)
    lut = np.empty((cb.m, cb.k), dtype=np.float64)
    for j in range(cb.m):
        lut[j] = cb.centroids[j].astype(np.float64) @ q[j * cb.sub_dim : (j + 1) * cb.sub_dim]
    return lut


def pq_scan(lut: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Sum table entries along each code row: (n, m) codes -> (n,) float64."""
    out = np.zeros(codes.shape[0], dtype=np.float64)
    for j in range(lut.shape[0]):
        out += lut[j][codes[:, j]]
    return out


def pq_asymmetric_distance(query: np.ndarray, code: np.ndarray, cb: PqCodebook) -> float:
    """Squared distance from a raw query to an encoded vector.

    Equals euclidean distance to the decoded approximation within 1e-5
    relative; computed by table lookup, never by decoding.
    """
    if code.shape[0] != cb.m:
        raise LengthMismatch(f"code has {code.shape[0]} entries, expected {cb.m}")
    if np.any(code >= cb.k):
        raise CodeOutOfRange(f"code entry out of range for k={cb.k}")
    lut = pq_lookup_table(query, cb)
    return float(pq_scan(lut, code[None, :])[0])


# -------------------------------------------------- binary quantization


@dataclass
class Hyperplanes:
    """m random hyperplane normals, shape (m, dim), float32."""

    normals: np.ndarray

    @property
    def m(self) -> int:
        return self.normals.shape[0]

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def code_width(self) -> int:
        return (self.m + 7) // 8


def bq_train(dim: int, m: int, seed: int = 0) -> Hyperplanes:
    """Draw m standard-normal hyperplane normals. Data independent."""
    rng = np.random.default_rng(seed)
    return Hyperplanes(normals=rng.standard_normal((m, dim)).astype(np.float32))


def bq_encode(vector: np.ndarray, planes: Hyperplanes) -> np.ndarray:
    """Sign bits of the projections, packed; bit is 1 on the boundary."""
    return bq_encode_batch(vector[None, :], planes)[0]


def bq_encode_batch(vectors: np.ndarray, planes: Hyperplanes) -> np.ndarray:
    if vectors.shape[1] != planes.dim:
        raise DimensionMismatch(
            f"rows have {vectors.shape[1]} components, hyperplanes expect {planes.dim}"
        )
    proj = vectors.astype(np.float64) @ planes.normals.astype(np.float64).T
    return np.packbits(proj >= 0.0, axis=1)


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Differing-bit count between two packed codes of equal width."""
    if a.shape != b.shape:
        raise LengthMismatch(f"codes have widths {a.shape} and {b.shape}")
    return int(np.bitwise_count(np.bitwise_xor(a, b)).sum())


def hamming_scan(code: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Hamming distance from one packed code to each packed row."""
    if codes.shape[1] != code.shape[0]:
        raise LengthMismatch(
            f"rows have width {codes.shape[1]}, code has width {code.shape[0]}"
        )
    return np.bitwise_count(np.bitwise_xor(codes, code[None, :])).sum(
        axis=1, dtype=np.int64
    )


class CodeStore:
    """Side table of per-entity codes, swap-remove on delete."""

    def __init__(self, width: int, dtype=np.uint8):
        self._codes = np.zeros((0, width), dtype=dtype)
        self._ids: list[int] = []
        self._row_of: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, id: int) -> bool:
        return id in self._row_of

    @property
    def codes(self) -> np.ndarray:
        return self._codes[: len(self._ids)]

    @property
    def ids(self) -> list[int]:
        return self._ids

    def put(self, id: int, code: np.ndarray) -> None:
        row = self._row_of.get(id)
        if row is not None:
            self._codes[row] = code
            return
        n = len(self._ids)
        if n == self._codes.shape[0]:
            grown = np.zeros(
                (max(8, n * 2), self._codes.shape[1]), dtype=self._codes.dtype
            )
            grown[:n] = self._codes[:n]
            self._codes = grown
        self._codes[n] = code
        self._ids.append(id)
        self._row_of[id] = n

    def delete(self, id: int) -> bool:
        row = self._row_of.pop(id, None)
        if row is None:
            return False
        last = len(self._ids) - 1
        if row != last:
            self._codes[row] = self._codes[last]
            moved = self._ids[last]
            self._ids[row] = moved
            self._row_of[moved] = row
        self._ids.pop()
        return True
