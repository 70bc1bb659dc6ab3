"""Embedded vector data management: exact and graph-based approximate
search, product/binary quantization, metadata filtering, durable
append-log storage, an HTTP service, and a benchmark harness."""

from .engine import Collection, Database, UpsertResult, UpsertStatus
from .errors import VecdbError
from .filters import Eq, Filter, In, Range, eval_filter, filter_to_json, parse_filter
from .types import (
    BqParams,
    CollectionConfig,
    DistanceMetric,
    Entity,
    FlatParams,
    HnswParams,
    PqParams,
    SearchResult,
    SearchStats,
    as_vector,
    normalize,
    validate_entity,
)

__version__ = "0.1.0"

__all__ = [
    "BqParams",
    "Collection",
    "CollectionConfig",
    "Database",
    "DistanceMetric",
    "Entity",
    "Eq",
    "Filter",
    "FlatParams",
    "HnswParams",
    "In",
    "PqParams",
    "Range",
    "SearchResult",
    "SearchStats",
    "UpsertResult",
    "UpsertStatus",
    "VecdbError",
    "as_vector",
    "eval_filter",
    "filter_to_json",
    "normalize",
    "parse_filter",
    "validate_entity",
    "__version__",
]
