"""Composable metadata filter algebra and its evaluator.

A filter is a finite tree: comparison leaves (EQ, NE, GT, GEQ, LT, LEQ)
carrying a dotted key path and a scalar value, and AND/OR branches over one
or more child filters. Evaluation is pure and total: a missing key or a
cross-type comparison yields False rather than an error, so heterogeneous
user-defined metadata stays queryable.

Leaves compare with strict type classes: bool, number (int/float), and
string each form their own class, and any class mismatch is False — for NE
as well. Ordered comparisons apply to numbers by value and to strings
lexicographically; booleans are not ordered.

``&`` and ``|`` on nodes build AND/OR branches, mirroring list-based
construction via :func:`and_filter` / :func:`or_filter`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import MalformedFilter
from .models import MetadataMap, Scalar

LEAF_TYPES = ("EQ", "NE", "GT", "GEQ", "LT", "LEQ")
BRANCH_TYPES = ("AND", "OR")


@dataclass(frozen=True)
class FilterNode:
    type: str
    key: str = ""
    value: Scalar | None = None
    children: tuple["FilterNode", ...] = ()

    def __post_init__(self):
        if self.type in LEAF_TYPES:
            if not isinstance(self.key, str) or not self.key:
                raise MalformedFilter(f"{self.type} filter requires a non-empty key")
            if not isinstance(self.value, (str, int, float, bool)):
                raise MalformedFilter(f"{self.type} filter requires a scalar value")
            if self.children:
                raise MalformedFilter(f"{self.type} filter cannot have children")
        elif self.type in BRANCH_TYPES:
            if self.key or self.value is not None:
                raise MalformedFilter(f"{self.type} filter cannot carry key or value")
            if not self.children:
                raise MalformedFilter(f"{self.type} filter requires at least one child")
            if any(not isinstance(c, FilterNode) for c in self.children):
                raise MalformedFilter(f"{self.type} children must be filters")
        else:
            raise MalformedFilter(f"unknown filter type {self.type!r}")

    def __and__(self, other: "FilterNode") -> "FilterNode":
        return and_filter([self, other])

    def __or__(self, other: "FilterNode") -> "FilterNode":
        return or_filter([self, other])

    def matches(self, doc: MetadataMap) -> bool:
        return eval_filter(self, doc)

    def to_dict(self) -> dict:
        if self.type in BRANCH_TYPES:
            return {"type": self.type, "children": [c.to_dict() for c in self.children]}
        return {"type": self.type, "key": self.key, "value": self.value}

    @classmethod
    def from_dict(cls, data: Any) -> "FilterNode":
        if not isinstance(data, dict):
            raise MalformedFilter("filter must be an object")
        ftype = data.get("type")
        if ftype in BRANCH_TYPES:
            if "key" in data and data["key"] not in ("", None):
                raise MalformedFilter(f"{ftype} filter cannot carry a key")
            if data.get("value") is not None:
                raise MalformedFilter(f"{ftype} filter cannot carry a value")
            raw = data.get("children")
            if not isinstance(raw, list):
                raise MalformedFilter(f"{ftype} filter requires a children list")
            return cls(type=ftype, children=tuple(cls.from_dict(c) for c in raw))
        if ftype in LEAF_TYPES:
            if "children" in data and data["children"]:
                raise MalformedFilter(f"{ftype} filter cannot have children")
            if "key" not in data or "value" not in data:
                raise MalformedFilter(f"{ftype} filter requires key and value")
            return cls(type=ftype, key=data["key"], value=data["value"])
        raise MalformedFilter(f"unknown filter type {ftype!r}")


def _leaf(ftype: str, key: str, value: Scalar) -> FilterNode:
    return FilterNode(type=ftype, key=key, value=value)


def eq(key: str, value: Scalar) -> FilterNode:
    return _leaf("EQ", key, value)


def ne(key: str, value: Scalar) -> FilterNode:
    return _leaf("NE", key, value)


def gt(key: str, value: Scalar) -> FilterNode:
    return _leaf("GT", key, value)


def geq(key: str, value: Scalar) -> FilterNode:
    return _leaf("GEQ", key, value)


def lt(key: str, value: Scalar) -> FilterNode:
    return _leaf("LT", key, value)


def leq(key: str, value: Scalar) -> FilterNode:
    return _leaf("LEQ", key, value)


def and_filter(children: list[FilterNode]) -> FilterNode:
    return FilterNode(type="AND", children=tuple(children))


def or_filter(children: list[FilterNode]) -> FilterNode:
    return FilterNode(type="OR", children=tuple(children))


def _lookup(doc: Any, dotted: str) -> tuple[bool, Any]:
    """Resolve a dotted path; (False, None) when any segment is missing."""
    current = doc
    for part in dotted.split("."):
        if not isinstance(current, dict) or part not in current:
            return False, None
        current = current[part]
    return True, current


def _type_class(value: Any) -> str | None:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    return None


def _compare(ftype: str, stored: Any, wanted: Any) -> bool:
    cs, cw = _type_class(stored), _type_class(wanted)
    if cs is None or cw is None or cs != cw:
        return False
    if ftype == "EQ":
        return stored == wanted
    if ftype == "NE":
        return stored != wanted
    if cs == "bool":
        return False
    if ftype == "GT":
        return stored > wanted
    if ftype == "GEQ":
        return stored >= wanted
    if ftype == "LT":
        return stored < wanted
    return stored <= wanted


def eval_filter(node: FilterNode, doc: MetadataMap) -> bool:
    """Evaluate a filter tree against a metadata document."""
    if not isinstance(node, FilterNode):
        raise MalformedFilter("not a filter node")
    if node.type == "AND":
        return all(eval_filter(c, doc) for c in node.children)
    if node.type == "OR":
        return any(eval_filter(c, doc) for c in node.children)
    found, stored = _lookup(doc, node.key)
    if not found:
        return False
    return _compare(node.type, stored, node.value)


def filter_to_json(node: FilterNode) -> str:
    return json.dumps(node.to_dict(), separators=(",", ":"))


def filter_from_json(raw: str) -> FilterNode:
    try:
        data = json.loads(raw)
    except (TypeError, ValueError) as exc:
        raise MalformedFilter(f"filter is not valid JSON: {exc}") from exc
    return FilterNode.from_dict(data)
