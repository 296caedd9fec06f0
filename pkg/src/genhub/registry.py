"""Registry index document: schema, validation, and versioned mutation.

The index is a single JSON document: top-level ``schema_version`` plus a
``models`` map of model id -> metadata, each entry holding the three
sections ``execution`` / ``selection`` / ``description``. Serialization is
canonical (sorted keys, fixed layout) so the document round-trips
byte-identically and diffs stay minimal under version control.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Any, Iterator, Mapping

from .errors import DuplicateModelIdError, RegistrySchemaError, UnknownModelError, ValidationError

MODEL_ID_PATTERN = re.compile(r"^\d{5}_[A-Z0-9_]+$")
CHECKSUM_PATTERN = re.compile(r"^[0-9a-fA-F]{64}$")

SCHEMA_VERSION = "1.0.0"


@dataclass(frozen=True)
class Finding:
    """One validation problem, anchored at a metadata field path."""

    path: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def paths(self) -> list[str]:
        return [f.path for f in self.findings]

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"{f.path}: {f.message}" for f in self.findings)


@dataclass(frozen=True)
class ExecutionSection:
    package_url: str = ""
    checksum_sha256: str = ""
    package_size_bytes: int = 0
    image_size: tuple = ()
    generate_defaults: Mapping[str, Any] = field(default_factory=dict)
    dependencies: tuple[str, ...] = ()
    extension_weights: str = ""


@dataclass(frozen=True)
class SelectionSection:
    keywords: tuple[str, ...] = ()
    modality: str = ""
    organ: str = ""
    metrics: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class DescriptionSection:
    title: str = ""
    training_dataset: str = ""
    license: str = ""
    date: str = ""
    publication: str = ""


@dataclass(frozen=True)
class ModelMetadata:
    model_id: str
    execution: ExecutionSection = field(default_factory=ExecutionSection)
    selection: SelectionSection = field(default_factory=SelectionSection)
    description: DescriptionSection = field(default_factory=DescriptionSection)

    def to_dict(self) -> dict:
        return {
            "execution": {
                "package_url": self.execution.package_url,
                "checksum_sha256": self.execution.checksum_sha256,
                "package_size_bytes": self.execution.package_size_bytes,
                "image_size": _unfreeze(self.execution.image_size),
                "generate_defaults": _unfreeze(self.execution.generate_defaults),
                "dependencies": list(self.execution.dependencies),
                "extension_weights": self.execution.extension_weights,
            },
            "selection": {
                "keywords": list(self.selection.keywords),
                "modality": self.selection.modality,
                "organ": self.selection.organ,
                "metrics": _unfreeze(self.selection.metrics),
            },
            "description": {
                "title": self.description.title,
                "training_dataset": self.description.training_dataset,
                "license": self.description.license,
                "date": self.description.date,
                "publication": self.description.publication,
            },
        }


@dataclass(frozen=True)
class RegistryIndex:
    schema_version: str = SCHEMA_VERSION
    models: Mapping[str, ModelMetadata] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.models)

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.models

    def ids(self) -> list[str]:
        return sorted(self.models)

    def __iter__(self) -> Iterator[ModelMetadata]:
        for model_id in self.ids():
            yield self.models[model_id]


def _unfreeze(value):
    """Deep-convert tuples back to lists for JSON emission."""
    if isinstance(value, tuple):
        return [_unfreeze(v) for v in value]
    if isinstance(value, Mapping):
        return {k: _unfreeze(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_unfreeze(v) for v in value]
    return value


def _freeze(value):
    """Deep-convert lists to tuples so metadata values stay immutable."""
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return {k: _freeze(v) for k, v in value.items()}
    return value


def entry_from_dict(model_id: str, payload: Mapping[str, Any]) -> ModelMetadata:
    """Build a metadata entry from a raw mapping. Lenient: missing fields get
    empty defaults and surface later as validation findings."""
    if not isinstance(payload, Mapping):
        raise RegistrySchemaError(f"entry {model_id!r} is not an object")

    def section(name: str) -> Mapping[str, Any]:
        value = payload.get(name, {})
        if not isinstance(value, Mapping):
            raise RegistrySchemaError(f"entry {model_id!r}: section {name!r} is not an object")
        return value

    exe, sel, desc = section("execution"), section("selection"), section("description")
    return ModelMetadata(
        model_id=model_id,
        execution=ExecutionSection(
            package_url=exe.get("package_url", ""),
            checksum_sha256=exe.get("checksum_sha256", ""),
            package_size_bytes=exe.get("package_size_bytes", 0),
            image_size=_freeze(exe.get("image_size", [])),
            generate_defaults=_freeze(exe.get("generate_defaults", {})),
            dependencies=_freeze(exe.get("dependencies", [])),
            extension_weights=exe.get("extension_weights", ""),
        ),
        selection=SelectionSection(
            keywords=_freeze(sel.get("keywords", [])),
            modality=sel.get("modality", ""),
            organ=sel.get("organ", ""),
            metrics=_freeze(sel.get("metrics", {})),
        ),
        description=DescriptionSection(
            title=desc.get("title", ""),
            training_dataset=desc.get("training_dataset", ""),
            license=desc.get("license", ""),
            date=desc.get("date", ""),
            publication=desc.get("publication", ""),
        ),
    )


def _check_metrics_leaves(metrics: Any, path: str, findings: list[Finding]) -> None:
    if isinstance(metrics, Mapping):
        for key, value in metrics.items():
            _check_metrics_leaves(value, f"{path}.{key}", findings)
        return
    if isinstance(metrics, bool) or not isinstance(metrics, (int, float)):
        findings.append(Finding(path, "metric leaf is not a number"))
    elif not math.isfinite(metrics):
        findings.append(Finding(path, "metric leaf is not finite"))


def _is_iso_date(value: str) -> bool:
    for parser in (date.fromisoformat, datetime.fromisoformat):
        try:
            parser(value)
            return True
        except ValueError:
            continue
    return False


def validate_entry(meta: ModelMetadata, *, allow_deferred: bool = False) -> ValidationReport:
    """Check all type invariants of one entry.

    ``allow_deferred`` skips the package_url/checksum/size checks for entries
    built during contribution, before a storage receipt fills them in.
    """
    findings: list[Finding] = []
    f = findings.append

    if not isinstance(meta.model_id, str) or not MODEL_ID_PATTERN.match(meta.model_id):
        f(Finding("model_id", "must match five digits, underscore, then [A-Z0-9_]+"))

    exe = meta.execution
    if not allow_deferred:
        if not isinstance(exe.package_url, str) or not exe.package_url:
            f(Finding("execution.package_url", "missing or empty"))
        if not isinstance(exe.checksum_sha256, str) or not CHECKSUM_PATTERN.match(exe.checksum_sha256):
            f(Finding("execution.checksum_sha256", "must be 64 hex characters"))
        if not isinstance(exe.package_size_bytes, int) or isinstance(exe.package_size_bytes, bool) or exe.package_size_bytes < 0:
            f(Finding("execution.package_size_bytes", "must be a non-negative integer"))
    if not isinstance(exe.extension_weights, str):
        f(Finding("execution.extension_weights", "must be a string"))
    if not isinstance(exe.generate_defaults, Mapping):
        f(Finding("execution.generate_defaults", "must be a map"))
    if not isinstance(exe.dependencies, (list, tuple)) or any(not isinstance(d, str) for d in exe.dependencies):
        f(Finding("execution.dependencies", "must be a list of strings"))
    if not _image_size_ok(exe.image_size):
        f(Finding("execution.image_size", "must be [height, width] or a list of such pairs"))

    sel = meta.selection
    if not isinstance(sel.keywords, (list, tuple)) or not sel.keywords:
        f(Finding("selection.keywords", "must be a non-empty list"))
    elif any(not isinstance(k, str) for k in sel.keywords):
        f(Finding("selection.keywords", "keywords must be strings"))
    if not isinstance(sel.metrics, Mapping):
        f(Finding("selection.metrics", "must be a map"))
    else:
        _check_metrics_leaves(sel.metrics, "selection.metrics", findings)

    desc = meta.description
    if not isinstance(desc.title, str) or not desc.title:
        f(Finding("description.title", "missing or empty"))
    if not isinstance(desc.license, str) or not desc.license:
        f(Finding("description.license", "missing or empty"))
    if not isinstance(desc.date, str) or (desc.date and not _is_iso_date(desc.date)):
        f(Finding("description.date", "must be an ISO-8601 date string"))
    if not isinstance(desc.publication, str):
        f(Finding("description.publication", "must be a string (may be empty)"))

    return ValidationReport(tuple(findings))


def _image_size_ok(value: Any) -> bool:
    def pair_ok(p) -> bool:
        return (
            isinstance(p, (list, tuple))
            and len(p) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in p)
        )

    if isinstance(value, (list, tuple)):
        if not value:
            return True
        if pair_ok(value):
            return True
        return all(pair_ok(p) for p in value)
    return False


def load_index(document: bytes | str) -> RegistryIndex:
    """Parse and validate a registry document.

    Rejects malformed JSON, duplicate ids, and any entry that fails a type
    invariant; the raised error names the offending field paths.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")

    def reject_duplicates(pairs):
        seen = {}
        for key, value in pairs:
            if key in seen:
                raise DuplicateModelIdError(key)
            seen[key] = value
        return seen

    try:
        raw = json.loads(document, object_pairs_hook=reject_duplicates)
    except DuplicateModelIdError:
        raise
    except json.JSONDecodeError as exc:
        raise RegistrySchemaError(f"malformed registry document: {exc}") from exc

    if not isinstance(raw, dict):
        raise RegistrySchemaError("registry document must be a JSON object")
    schema_version = raw.get("schema_version")
    if not isinstance(schema_version, str) or not schema_version:
        raise RegistrySchemaError("missing schema_version")
    models_raw = raw.get("models")
    if not isinstance(models_raw, dict):
        raise RegistrySchemaError("missing models map")

    models: dict[str, ModelMetadata] = {}
    problems: list[str] = []
    for model_id in sorted(models_raw):
        meta = entry_from_dict(model_id, models_raw[model_id])
        report = validate_entry(meta)
        if not report.ok:
            problems.extend(f"{model_id}: {finding.path}: {finding.message}" for finding in report.findings)
        models[model_id] = meta
    if problems:
        raise RegistrySchemaError("invalid registry entries: " + "; ".join(problems), detail=problems)

    return RegistryIndex(schema_version=schema_version, models=models)


def serialize_index(index: RegistryIndex) -> bytes:
    """Canonical serialization: sorted keys, two-space indent, trailing newline."""
    payload = {
        "schema_version": index.schema_version,
        "models": {model_id: index.models[model_id].to_dict() for model_id in index.ids()},
    }
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return text.encode("utf-8")


def upsert_entry(index: RegistryIndex, meta: ModelMetadata) -> RegistryIndex:
    """Insert or replace one entry, returning a new index (input untouched)."""
    report = validate_entry(meta)
    if not report.ok:
        raise ValidationError(f"entry {meta.model_id!r} failed validation: {report}", detail=report)
    models = dict(index.models)
    models[meta.model_id] = meta
    return RegistryIndex(schema_version=index.schema_version, models=models)


def get_metadata(index: RegistryIndex, model_id: str) -> ModelMetadata:
    try:
        return index.models[model_id]
    except KeyError:
        raise UnknownModelError(model_id) from None
