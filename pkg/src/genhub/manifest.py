"""In-package model contract: the ``model.manifest`` file.

Every model package carries a JSON manifest at its root declaring the
entrypoint command, generate parameters with defaults, the weights file,
and the produced outputs. The hub never imports package code; the manifest
is the whole interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import ManifestInvalidError

MANIFEST_NAME = "model.manifest"

PARAM_KINDS = ("int", "float", "string", "bool", "path", "float_list")
OUTPUT_KINDS = ("image", "mask", "label", "tabular")
FILE_FORMATS = ("png", "csv")

LATENT_PARAM = "input_latent_vector"


@dataclass(frozen=True)
class ManifestParam:
    name: str
    kind: str
    default: Any = None
    required: bool = False


@dataclass(frozen=True)
class WeightsSpec:
    name: str
    extension: str

    @property
    def filename(self) -> str:
        return f"{self.name}{self.extension}"


@dataclass(frozen=True)
class OutputSpec:
    kind: str
    file_format: str


@dataclass(frozen=True)
class ConditionSpec:
    name: str
    values: tuple


@dataclass(frozen=True)
class ModelManifest:
    model_id: str
    entrypoint: str
    generate_method_name: str
    params: tuple[ManifestParam, ...]
    weights: WeightsSpec
    outputs: tuple[OutputSpec, ...]
    latent_dim: int | None = None
    condition: ConditionSpec | None = None

    def param(self, name: str) -> ManifestParam | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    def output_kinds(self) -> list[str]:
        return [o.kind for o in self.outputs]

    def to_dict(self) -> dict:
        data: dict[str, Any] = {
            "model_id": self.model_id,
            "entrypoint": self.entrypoint,
            "generate_method_name": self.generate_method_name,
            "params": [
                {"name": p.name, "kind": p.kind, "default": p.default, "required": p.required}
                for p in self.params
            ],
            "weights": {"name": self.weights.name, "extension": self.weights.extension},
            "outputs": [{"kind": o.kind, "file_format": o.file_format} for o in self.outputs],
        }
        if self.latent_dim is not None:
            data["latent_dim"] = self.latent_dim
        if self.condition is not None:
            data["condition"] = {"name": self.condition.name, "values": list(self.condition.values)}
        return data


def value_matches_kind(kind: str, value: Any) -> bool:
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "string":
        return isinstance(value, str)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "path":
        return isinstance(value, (str, Path))
    if kind == "float_list":
        return isinstance(value, (list, tuple)) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
    return False


def coerce_from_string(kind: str, raw: str) -> Any:
    """Parse a CLI-provided string into the manifest parameter's kind."""
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "float_list":
        return [float(part) for part in raw.replace(",", " ").split()]
    return raw  # string, path


def parse_manifest(payload: Mapping[str, Any] | bytes | str) -> ModelManifest:
    if isinstance(payload, (bytes, str)):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ManifestInvalidError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(payload, Mapping):
        raise ManifestInvalidError("manifest must be a JSON object")

    problems: list[str] = []

    def need_str(key: str) -> str:
        value = payload.get(key)
        if not isinstance(value, str) or not value:
            problems.append(f"{key}: missing or empty")
            return ""
        return value

    model_id = need_str("model_id")
    entrypoint = need_str("entrypoint")
    generate_method_name = need_str("generate_method_name")

    params: list[ManifestParam] = []
    for i, raw in enumerate(payload.get("params", [])):
        if not isinstance(raw, Mapping) or not isinstance(raw.get("name"), str):
            problems.append(f"params[{i}]: malformed")
            continue
        kind = raw.get("kind")
        if kind not in PARAM_KINDS:
            problems.append(f"params[{i}].kind: {kind!r} not one of {PARAM_KINDS}")
            continue
        default = raw.get("default")
        if default is not None and not value_matches_kind(kind, default):
            problems.append(f"params[{i}].default: does not match kind {kind!r}")
        params.append(
            ManifestParam(name=raw["name"], kind=kind, default=default, required=bool(raw.get("required", False)))
        )

    weights_raw = payload.get("weights")
    if not isinstance(weights_raw, Mapping) or not isinstance(weights_raw.get("name"), str):
        problems.append("weights: missing name/extension")
        weights = WeightsSpec(name="", extension="")
    else:
        weights = WeightsSpec(name=weights_raw["name"], extension=weights_raw.get("extension", ""))

    outputs: list[OutputSpec] = []
    for i, raw in enumerate(payload.get("outputs", [])):
        if not isinstance(raw, Mapping):
            problems.append(f"outputs[{i}]: malformed")
            continue
        kind, fmt = raw.get("kind"), raw.get("file_format")
        if kind not in OUTPUT_KINDS:
            problems.append(f"outputs[{i}].kind: {kind!r} not one of {OUTPUT_KINDS}")
        if fmt not in FILE_FORMATS:
            problems.append(f"outputs[{i}].file_format: {fmt!r} not one of {FILE_FORMATS}")
        if kind in OUTPUT_KINDS and fmt in FILE_FORMATS:
            outputs.append(OutputSpec(kind=kind, file_format=fmt))
    if not outputs and "outputs" not in payload:
        problems.append("outputs: missing")
    elif not outputs:
        problems.append("outputs: empty or entirely malformed")

    latent_dim = payload.get("latent_dim")
    if latent_dim is not None and (not isinstance(latent_dim, int) or isinstance(latent_dim, bool) or latent_dim <= 0):
        problems.append("latent_dim: must be a positive integer")
        latent_dim = None

    condition = None
    condition_raw = payload.get("condition")
    if condition_raw is not None:
        if not isinstance(condition_raw, Mapping) or not isinstance(condition_raw.get("name"), str):
            problems.append("condition: must carry name and values")
        else:
            condition = ConditionSpec(
                name=condition_raw["name"], values=tuple(condition_raw.get("values", []))
            )

    manifest = ModelManifest(
        model_id=model_id,
        entrypoint=entrypoint,
        generate_method_name=generate_method_name,
        params=tuple(params),
        weights=weights,
        outputs=tuple(outputs),
        latent_dim=latent_dim,
        condition=condition,
    )

    if manifest.latent_dim is not None:
        latent = manifest.param(LATENT_PARAM)
        if latent is None or latent.kind != "float_list":
            problems.append(f"latent_dim declared but no {LATENT_PARAM!r} param of kind float_list")

    if problems:
        raise ManifestInvalidError("invalid manifest: " + "; ".join(problems), detail=problems)
    return manifest


def load_manifest(package_dir: Path) -> ModelManifest:
    path = Path(package_dir) / MANIFEST_NAME
    if not path.is_file():
        raise ManifestInvalidError(f"no {MANIFEST_NAME} in {package_dir}")
    manifest = parse_manifest(path.read_bytes())
    weights_file = Path(package_dir) / manifest.weights.filename
    if not weights_file.is_file():
        raise ManifestInvalidError(f"declared weights file {manifest.weights.filename!r} not found in package")
    return manifest


def write_manifest(package_dir: Path, manifest: ModelManifest) -> Path:
    path = Path(package_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def check_defaults_cover_registry(manifest: ModelManifest, generate_defaults: Mapping[str, Any]) -> list[str]:
    """Registry generate_defaults must only name params the manifest declares
    (checked at package time, not index-load time)."""
    declared = set(manifest.param_names())
    return [name for name in generate_defaults if name not in declared]
