"""Exception types shared across the engine.

Every error carries a stable machine-readable ``code`` (also used by the
HTTP layer) and an ``http_status`` it maps to.
"""


class VecdbError(Exception):
    """Base class for all engine errors."""

    code = "internal"
    http_status = 500


class DimensionMismatch(VecdbError):
    code = "dimension-mismatch"
    http_status = 400


class NonFiniteComponent(VecdbError):
    code = "non-finite-component"
    http_status = 400


class ZeroVector(VecdbError):
    code = "zero-vector"
    http_status = 400


class InvalidConfig(VecdbError):
    code = "invalid-config"
    http_status = 400


class InvalidEntity(VecdbError):
    code = "invalid-entity"
    http_status = 400


class InvalidFilter(VecdbError):
    code = "invalid-filter"
    http_status = 400


class FilterTypeMismatch(VecdbError):
    code = "filter-type-mismatch"
    http_status = 400


class InvalidQuery(VecdbError):
    code = "invalid-query"
    http_status = 400


class DuplicateId(VecdbError):
    code = "duplicate-id"
    http_status = 409


class NameConflict(VecdbError):
    code = "name-conflict"
    http_status = 409


class UnknownCollection(VecdbError):
    code = "unknown-collection"
    http_status = 404


class UnknownId(VecdbError):
    code = "unknown-id"
    http_status = 404


class EmptyGraph(VecdbError):
    code = "empty-graph"
    http_status = 400


class MalformedBytes(VecdbError):
    code = "malformed-bytes"
    http_status = 400


class VersionMismatch(VecdbError):
    code = "version-mismatch"
    http_status = 500


class CorruptRecord(VecdbError):
    code = "corrupt-record"
    http_status = 500


class StorageClosed(VecdbError):
    code = "storage-closed"
    http_status = 500


class LengthMismatch(VecdbError):
    code = "length-mismatch"
    http_status = 400


class CodeOutOfRange(VecdbError):
    code = "code-out-of-range"
    http_status = 400


class TooFewTrainingVectors(VecdbError):
    code = "too-few-training-vectors"
    http_status = 400


class NotDivisible(VecdbError):
    code = "dimension-not-divisible"
    http_status = 400
