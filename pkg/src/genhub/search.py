"""Keyword search over model metadata and metric-based ranking.

Matching is case-insensitive substring over every string leaf (and string
list element) of the three metadata sections, so a query like ``patches``
hits composite phrases such as "breast mass patches". Numeric leaves are
never searched. Ranking resolves dotted paths inside ``selection.metrics``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import (
    BadQueryError,
    EmptyMatchError,
    MetricNotFoundError,
    UnknownModelError,
    UnknownOperatorError,
)
from .registry import ModelMetadata, RegistryIndex, get_metadata

OPERATORS = ("AND", "OR", "XOR")

ASCENDING = "ascending"
DESCENDING = "descending"


@dataclass(frozen=True)
class SearchQuery:
    values: tuple[str, ...]
    operator: str

    @classmethod
    def create(cls, values: Sequence[str], operator: str = "OR") -> "SearchQuery":
        """Normalize: lowercase values, collapse duplicates (order kept),
        uppercase the operator."""
        operator = str(operator).upper()
        if operator not in OPERATORS:
            raise UnknownOperatorError(operator)
        seen: dict[str, None] = {}
        for value in values:
            seen.setdefault(str(value).lower())
        if not seen:
            raise BadQueryError("search query needs at least one value")
        return cls(values=tuple(seen), operator=operator)


@dataclass(frozen=True)
class MatchedEntry:
    model_id: str
    matched_values: tuple[str, ...]
    hit_paths: tuple[str, ...]


@dataclass(frozen=True)
class MatchCandidates:
    query: SearchQuery
    entries: tuple[MatchedEntry, ...] = ()

    def ids(self) -> list[str]:
        return [e.model_id for e in self.entries]


@dataclass(frozen=True)
class RankedList:
    metric_path: str
    order: str
    items: tuple[tuple[str, float], ...] = ()
    missing: tuple[str, ...] = field(default=())

    def ids(self) -> list[str]:
        return [model_id for model_id, _ in self.items]


def _walk_strings(value: Any, path: str):
    """Yield (path, lowercase text) for every string leaf under value."""
    if isinstance(value, str):
        yield path, value.lower()
    elif isinstance(value, Mapping):
        for key, sub in value.items():
            yield from _walk_strings(sub, f"{path}.{key}")
    elif isinstance(value, (list, tuple)):
        for i, sub in enumerate(value):
            yield from _walk_strings(sub, f"{path}[{i}]")
    # numbers, bools, None: not searchable


def _string_leaves(meta: ModelMetadata):
    for section, payload in meta.to_dict().items():
        yield from _walk_strings(payload, section)


def recursive_match(value: str, meta: ModelMetadata) -> list[str]:
    """Every metadata field path whose text contains ``value`` (case-insensitive)."""
    needle = value.lower()
    return [path for path, text in _string_leaves(meta) if needle in text]


def find_models(index: RegistryIndex, query: SearchQuery) -> MatchCandidates:
    """Evaluate a query against every model; keep only true matches.

    AND: all values hit; OR: at least one hits; XOR: exactly one distinct
    value hits. Entries come back ordered by model id.
    """
    if query.operator not in OPERATORS:
        raise UnknownOperatorError(query.operator)

    entries: list[MatchedEntry] = []
    for model_id in index.ids():
        meta = index.models[model_id]
        matched: dict[str, list[str]] = {}
        for value in query.values:
            paths = recursive_match(value, meta)
            if paths:
                matched[value] = paths
        if not matched:
            continue
        if query.operator == "AND" and len(matched) != len(query.values):
            continue
        if query.operator == "XOR" and len(matched) != 1:
            continue
        hit_paths: list[str] = []
        for paths in matched.values():
            hit_paths.extend(p for p in paths if p not in hit_paths)
        entries.append(
            MatchedEntry(
                model_id=model_id,
                matched_values=tuple(v for v in query.values if v in matched),
                hit_paths=tuple(hit_paths),
            )
        )
    return MatchCandidates(query=query, entries=tuple(entries))


def resolve_metric(meta: ModelMetadata, metric_path: str) -> float | None:
    """Resolve a dotted path inside selection.metrics to a numeric leaf."""
    node: Any = meta.selection.metrics
    for part in metric_path.split("."):
        if not isinstance(node, Mapping) or part not in node:
            return None
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        return None
    return float(node)


def rank_models(
    index: RegistryIndex,
    metric_path: str,
    order: str = ASCENDING,
    ids: Sequence[str] | None = None,
) -> RankedList:
    """Rank models by a metric value; ties break by model id ascending.

    Models lacking the metric are excluded and listed in ``missing`` —
    silently ranking them last would misreport their quality.
    """
    if order not in (ASCENDING, DESCENDING):
        raise UnknownOperatorError(order)

    if ids is None:
        candidates = index.ids()
    else:
        candidates = list(ids)
        for model_id in candidates:
            if model_id not in index:
                raise UnknownModelError(model_id)

    scored: list[tuple[str, float]] = []
    missing: list[str] = []
    for model_id in candidates:
        value = resolve_metric(get_metadata(index, model_id), metric_path)
        if value is None:
            missing.append(model_id)
        else:
            scored.append((model_id, value))
    if not scored:
        raise MetricNotFoundError(metric_path)

    reverse = order == DESCENDING
    # sort by id first, then stable-sort by value: ties stay id-ascending in either order
    scored.sort(key=lambda item: item[0])
    scored.sort(key=lambda item: item[1], reverse=reverse)
    return RankedList(metric_path=metric_path, order=order, items=tuple(scored), missing=tuple(sorted(missing)))


def find_rank(index: RegistryIndex, query: SearchQuery, metric_path: str, order: str = ASCENDING) -> RankedList:
    """Rank restricted to the query's true matches; callers take items[0] to auto-select."""
    candidates = find_models(index, query)
    if not candidates.entries:
        raise EmptyMatchError(query.values)
    return rank_models(index, metric_path, order, ids=candidates.ids())
