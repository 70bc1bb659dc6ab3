"""Metadata filters: a conjunction of Eq / Range / In predicates.

Matching is strict: Eq and In compare with exact types (no int/float
coercion, and bool never equals 0/1). Range is the one place int and
float mix, since numeric bounds would be useless otherwise; bool and str
never satisfy a Range. A predicate on a missing field is false.

JSON shape::

    {"must": [
        {"eq":    {"field": "color", "value": "red"}},
        {"range": {"field": "price", "min": 10, "max": 99.5}},
        {"in":    {"field": "size", "values": ["s", "m"]}}
    ]}
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import FilterTypeMismatch, InvalidFilter
from .types import MetadataValue


@dataclass(frozen=True)
class Eq:
    field: str
    value: MetadataValue


@dataclass(frozen=True)
class Range:
    field: str
    min: Union[int, float, None] = None
    max: Union[int, float, None] = None


@dataclass(frozen=True)
class In:
    field: str
    values: tuple


Predicate = Union[Eq, Range, In]


@dataclass(frozen=True)
class Filter:
    must: tuple

    def validate(self) -> None:
        """Structural checks; raises InvalidFilter naming the problem."""
        for pred in self.must:
            if not isinstance(pred, (Eq, Range, In)):
                raise InvalidFilter(f"unknown predicate {pred!r}")
            if not isinstance(pred.field, str) or not pred.field:
                raise InvalidFilter("predicate field must be a non-empty string")
            if isinstance(pred, Range):
                for name, bound in (("min", pred.min), ("max", pred.max)):
                    if bound is not None and (
                        type(bound) not in (int, float)
                    ):
                        raise InvalidFilter(
                            f"range {name} must be numeric, got {bound!r}"
                        )
                if pred.min is None and pred.max is None:
                    raise InvalidFilter("range needs at least one bound")
                if (
                    pred.min is not None
                    and pred.max is not None
                    and pred.min > pred.max
                ):
                    raise InvalidFilter(
                        f"range min {pred.min} exceeds max {pred.max}"
                    )


def _values_equal(stored, wanted) -> bool:
    # bool subclasses int in python, so match types exactly first
    if type(stored) is not type(wanted):
        return False
    return stored == wanted


def _eval_predicate(pred: Predicate, metadata: dict, strict: bool) -> bool:
    if pred.field not in metadata:
        return False
    value = metadata[pred.field]
    if isinstance(pred, Eq):
        return _values_equal(value, pred.value)
    if isinstance(pred, In):
        return any(_values_equal(value, w) for w in pred.values)
    if type(value) not in (int, float):
        if strict:
            raise FilterTypeMismatch(
                f"range on field {pred.field!r} hit non-numeric value {value!r}"
            )
        return False
    if pred.min is not None and value < pred.min:
        return False
    if pred.max is not None and value > pred.max:
        return False
    return True


def eval_filter(filt: Filter, metadata: dict) -> bool:
    """True iff every predicate matches. Total: never raises."""
    return all(_eval_predicate(p, metadata, strict=False) for p in filt.must)


def eval_filter_strict(filt: Filter, metadata: dict) -> bool:
    """Like eval_filter but a Range hitting a non-numeric present field
    raises FilterTypeMismatch; used by the query path."""
    return all(_eval_predicate(p, metadata, strict=True) for p in filt.must)


def parse_filter(doc) -> Filter:
    """Build a Filter from its JSON form; raises InvalidFilter."""
    if not isinstance(doc, dict):
        raise InvalidFilter("filter must be an object")
    unknown = set(doc) - {"must"}
    if unknown:
        raise InvalidFilter(f"unknown filter keys {sorted(unknown)}")
    clauses = doc.get("must", [])
    if not isinstance(clauses, list):
        raise InvalidFilter("filter.must must be a list")
    preds: list[Predicate] = []
    for clause in clauses:
        if not isinstance(clause, dict) or len(clause) != 1:
            raise InvalidFilter(f"each clause must be a single-key object, got {clause!r}")
        kind, body = next(iter(clause.items()))
        if not isinstance(body, dict):
            raise InvalidFilter(f"clause body must be an object, got {body!r}")
        field = body.get("field")
        if kind == "eq":
            if set(body) != {"field", "value"}:
                raise InvalidFilter("eq takes exactly field and value")
            preds.append(Eq(field=field, value=body["value"]))
        elif kind == "range":
            if not set(body) <= {"field", "min", "max"} or "field" not in body:
                raise InvalidFilter("range takes field plus min and/or max")
            preds.append(Range(field=field, min=body.get("min"), max=body.get("max")))
        elif kind == "in":
            if set(body) != {"field", "values"}:
                raise InvalidFilter("in takes exactly field and values")
            values = body["values"]
            if not isinstance(values, list):
                raise InvalidFilter("in.values must be a list")
            preds.append(In(field=field, values=tuple(values)))
        else:
            raise InvalidFilter(f"unknown predicate kind {kind!r}")
    filt = Filter(must=tuple(preds))
    filt.validate()
    return filt


def filter_to_json(filt: Filter) -> dict:
    clauses = []
    for pred in filt.must:
        if isinstance(pred, Eq):
            clauses.append({"eq": {"field": pred.field, "value": pred.value}})
        elif isinstance(pred, Range):
            body: dict = {"field": pred.field}
            if pred.min is not None:
                body["min"] = pred.min
            if pred.max is not None:
                body["max"] = pred.max
            clauses.append({"range": body})
        else:
            clauses.append({"in": {"field": pred.field, "values": list(pred.values)}})
    return {"must": clauses}
