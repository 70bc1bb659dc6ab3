"""Core data model: vectors, entities, metadata, collection configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import InvalidConfig, ZeroVector

MAX_ID = 2**64 - 1

# Metadata values are scalars only; nested structures are out of scope.
MetadataValue = Union[str, int, float, bool]


class DistanceMetric(str, Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    DOT = "dot"


def as_vector(data, dim: int | None = None) -> np.ndarray:
    """Coerce input to a read-only float32 vector.

    Args:
        data: sequence of numbers or a 1-d numpy array.
        dim: expected dimensionality, checked when given.

    Returns:
        A 1-d float32 ndarray with the write flag cleared.

    Raises ValueError on wrong shape, expected-dimension mismatch, or
    non-finite components.
    """
    v = np.asarray(data, dtype=np.float32)
    if v.ndim != 1:
        raise ValueError(f"vector must be 1-d, got shape {v.shape}")
    if v.shape[0] < 1:
        raise ValueError("vector must have at least one component")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension-mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite-component: vector contains nan or inf")
    v = v.copy() if v.base is not None or v.flags.writeable else v
    v.setflags(write=False)
    return v


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit L2 norm as float32.

    Raises ZeroVector when the norm is zero. Normalizing an already
    normalized vector changes no component by more than 1e-6.
    """
    n = float(np.linalg.norm(v.astype(np.float64)))
    if n == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    out = (v.astype(np.float64) / n).astype(np.float32)
    out.setflags(write=False)
    return out


def _valid_metadata_value(v) -> bool:
    if type(v) is bool or type(v) is str:
        return True
    if type(v) is int:
        return -(2**63) <= v < 2**63
    if type(v) is float:
        return math.isfinite(v)
    return False


@dataclass
class Entity:
    """One stored point: id, vector, and a flat metadata map."""

    id: int
    vector: np.ndarray
    metadata: dict[str, MetadataValue] = field(default_factory=dict)

    def __post_init__(self):
        self.vector = as_vector(self.vector)


def validate_entity(entity: Entity, config: "CollectionConfig") -> str | None:
    """Check an entity against a collection's invariants.

    Returns None when valid, otherwise a message naming the offending
    field, prefixed with a stable error code.
    """
    if not isinstance(entity.id, int) or isinstance(entity.id, bool):
        return "invalid-id: id must be an integer"
    if not (0 <= entity.id <= MAX_ID):
        return f"invalid-id: id {entity.id} outside unsigned 64-bit range"
    v = entity.vector
    if v.shape[0] != config.dim:
        return (
            f"dimension-mismatch: vector has {v.shape[0]} components, "
            f"collection requires {config.dim}"
        )
    if not np.all(np.isfinite(v)):
        return "non-finite-component: vector contains nan or inf"
    if config.metric is DistanceMetric.COSINE and not np.any(v):
        return "zero-vector: cosine collections reject all-zero vectors"
    if not isinstance(entity.metadata, dict):
        return "invalid-metadata: metadata must be a flat map"
    for k, val in entity.metadata.items():
        if not isinstance(k, str) or not k:
            return f"invalid-metadata: key {k!r} must be a non-empty string"
        if not _valid_metadata_value(val):
            return (
                f"invalid-metadata: field {k!r} has unsupported or "
                f"non-finite value {val!r}"
            )
    return None


@dataclass(frozen=True)
class FlatParams:
    """Exact scan index, no tuning knobs."""


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    seed: int = 0


@dataclass(frozen=True)
class PqParams:
    """Product quantization: m sub-vectors, k centroids per sub-space."""

    m: int
    k: int = 256


@dataclass(frozen=True)
class BqParams:
    """Binary quantization with m random hyperplanes."""

    m: int


IndexParams = Union[FlatParams, HnswParams]
QuantizationParams = Union[PqParams, BqParams, None]


@dataclass(frozen=True)
class CollectionConfig:
    name: str
    dim: int
    metric: DistanceMetric = DistanceMetric.COSINE
    index: IndexParams = field(default_factory=HnswParams)
    quantization: QuantizationParams = None

    def validate(self) -> None:
        """Raise InvalidConfig naming the offending field."""
        if not self.name or not isinstance(self.name, str):
            raise InvalidConfig("name: must be a non-empty string")
        if any(c in self.name for c in "/\\\x00") or self.name in (".", ".."):
            raise InvalidConfig(f"name: {self.name!r} contains reserved characters")
        if not isinstance(self.dim, int) or self.dim < 1:
            raise InvalidConfig(f"dim: must be a positive integer, got {self.dim!r}")
        if not isinstance(self.metric, DistanceMetric):
            raise InvalidConfig(f"metric: unknown metric {self.metric!r}")
        if isinstance(self.index, HnswParams):
            if self.index.m < 2:
                raise InvalidConfig(f"index.m: must be >= 2, got {self.index.m}")
            if self.index.ef_construction < self.index.m:
                raise InvalidConfig(
                    "index.ef_construction: must be >= index.m, got "
                    f"{self.index.ef_construction}"
                )
            if not (0 <= self.index.seed < 2**64):
                raise InvalidConfig(
                    f"index.seed: must fit an unsigned 64-bit int, got {self.index.seed}"
                )
        elif not isinstance(self.index, FlatParams):
            raise InvalidConfig(f"index: unknown index choice {self.index!r}")
        q = self.quantization
        if q is None:
            return
        if isinstance(q, PqParams):
            if q.m < 1:
                raise InvalidConfig(f"quantization.m: must be >= 1, got {q.m}")
            if self.dim % q.m != 0:
                raise InvalidConfig(
                    f"quantization.m: {q.m} does not divide dim {self.dim}"
                )
            if not (2 <= q.k <= 256):
                raise InvalidConfig(
                    f"quantization.k: must be in [2, 256] so codes fit one "
                    f"byte, got {q.k}"
                )
        elif isinstance(q, BqParams):
            if q.m < 1:
                raise InvalidConfig(f"quantization.m: must be >= 1, got {q.m}")
        else:
            raise InvalidConfig(f"quantization: unknown mode {q!r}")

    def to_json(self) -> dict:
        if isinstance(self.index, HnswParams):
            index = {
                "type": "hnsw",
                "m": self.index.m,
                "ef_construction": self.index.ef_construction,
                "seed": self.index.seed,
            }
        else:
            index = {"type": "flat"}
        if isinstance(self.quantization, PqParams):
            quant = {"type": "pq", "m": self.quantization.m, "k": self.quantization.k}
        elif isinstance(self.quantization, BqParams):
            quant = {"type": "bq", "m": self.quantization.m}
        else:
            quant = {"type": "none"}
        return {
            "name": self.name,
            "dim": self.dim,
            "metric": self.metric.value,
            "index": index,
            "quantization": quant,
        }

    @staticmethod
    def from_json(doc: dict, name: str | None = None) -> "CollectionConfig":
        """Build a config from its JSON form; raises InvalidConfig."""
        if not isinstance(doc, dict):
            raise InvalidConfig("config: expected an object")
        cname = name if name is not None else doc.get("name")
        if "dim" not in doc:
            raise InvalidConfig("dim: required")
        dim = doc["dim"]
        if isinstance(dim, bool) or not isinstance(dim, int):
            raise InvalidConfig(f"dim: must be an integer, got {dim!r}")
        try:
            metric = DistanceMetric(doc.get("metric", "cosine"))
        except ValueError:
            raise InvalidConfig(f"metric: unknown metric {doc.get('metric')!r}")
        idoc = doc.get("index", {"type": "hnsw"})
        if not isinstance(idoc, dict) or "type" not in idoc:
            raise InvalidConfig("index: expected an object with a type")
        index: IndexParams
        if idoc["type"] == "flat":
            index = FlatParams()
        elif idoc["type"] == "hnsw":
            try:
                index = HnswParams(
                    m=int(idoc.get("m", 16)),
                    ef_construction=int(idoc.get("ef_construction", 200)),
                    seed=int(idoc.get("seed", 0)),
                )
            except (TypeError, ValueError):
                raise InvalidConfig("index: m, ef_construction, seed must be integers")
        else:
            raise InvalidConfig(f"index.type: unknown type {idoc['type']!r}")
        qdoc = doc.get("quantization")
        quant: QuantizationParams = None
        if qdoc is not None:
            if not isinstance(qdoc, dict) or "type" not in qdoc:
                raise InvalidConfig("quantization: expected an object with a type")
            if qdoc["type"] == "none":
                quant = None
            elif qdoc["type"] == "pq":
                if "m" not in qdoc:
                    raise InvalidConfig("quantization.m: required for pq")
                try:
                    quant = PqParams(m=int(qdoc["m"]), k=int(qdoc.get("k", 256)))
                except (TypeError, ValueError):
                    raise InvalidConfig("quantization: m and k must be integers")
            elif qdoc["type"] == "bq":
                if "m" not in qdoc:
                    raise InvalidConfig("quantization.m: required for bq")
                try:
                    quant = BqParams(m=int(qdoc["m"]))
                except (TypeError, ValueError):
                    raise InvalidConfig("quantization.m: must be an integer")
            else:
                raise InvalidConfig(f"quantization.type: unknown type {qdoc['type']!r}")
        cfg = CollectionConfig(
            name=cname, dim=dim, metric=metric, index=index, quantization=quant
        )
        cfg.validate()
        return cfg


@dataclass
class SearchStats:
    """Work counters for one query."""

    distance_evals: int = 0
    visited: int = 0


@dataclass
class SearchResult:
    """Hits as (id, distance) pairs, ascending, plus work stats."""

    hits: list[tuple[int, float]]
    stats: SearchStats = field(default_factory=SearchStats)
