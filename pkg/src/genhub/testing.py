"""Toy model packages and fixture registries for tests and demos.

The toy generator is a standalone script speaking the package wire
protocol. Its pixels are a pure function of (chunk seed + local index), or
of the latent vector when one is supplied, so seeded runs are byte
reproducible and chunking is invisible. ``python -m genhub.testing DEST``
scaffolds a ready-to-serve playground registry.
"""

from __future__ import annotations

import json
import shlex
import sys
from pathlib import Path
from typing import Mapping, Sequence

from .contribute import package_model
from .registry import (
    DescriptionSection,
    ExecutionSection,
    ModelMetadata,
    RegistryIndex,
    SelectionSection,
    serialize_index,
)

_GENERATOR_SCRIPT = '''\
#!/usr/bin/env python3
"""Toy deterministic sample generator (hub wire protocol)."""
import argparse
import json
import sys
import zlib
from pathlib import Path

from PIL import Image

WIDTH = __WIDTH__
HEIGHT = __HEIGHT__
OUTPUTS = __OUTPUTS__
LATENT_DIM = __LATENT_DIM__
FAIL_MODE = __FAIL_MODE__


def pixel(seed, x, y, c, scale):
    return min(255, int(((seed * 31 + x * 7 + y * 13 + c * 101) % 256) * scale))


def latent_fingerprint(latent):
    acc = 0
    for i, v in enumerate(latent):
        acc = (acc + int(round(float(v) * 1000.0)) * (i + 1)) % 1000003
    return acc


def render(seed, x_latent, kind_offset, scale):
    img = Image.new("RGB", (WIDTH, HEIGHT))
    px = img.load()
    base = latent_fingerprint(x_latent) if x_latent is not None else seed
    for y in range(HEIGHT):
        for x in range(WIDTH):
            px[x, y] = tuple(pixel(base, x, y, c + 3 * kind_offset, scale) for c in range(3))
    return img


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--request", required=True)
    args = parser.parse_args()
    if FAIL_MODE == "exit1":
        print("injected failure", file=sys.stderr)
        sys.exit(1)

    request_path = Path(args.request)
    request = json.loads(request_path.read_text())
    out_dir = Path(request["output_dir"])
    n = int(request["num_samples"])
    seed = int(request["seed"])
    params = request.get("params", {})

    weights = params.get("weights_path")
    if weights and not Path(weights).is_file():
        print("weights file missing: %s" % weights, file=sys.stderr)
        sys.exit(3)
    scale = float(params.get("brightness", 1.0))
    latent = params.get("input_latent_vector")
    condition = params.get("condition")
    cond_offset = zlib.crc32(str(condition).encode()) % 997 if condition is not None else 0

    count = n - 1 if FAIL_MODE == "short_output" and n > 1 else n
    samples = []
    for i in range(count):
        vec = None
        if latent is not None and LATENT_DIM:
            vec = latent if len(latent) == LATENT_DIM else latent[i * LATENT_DIM:(i + 1) * LATENT_DIM]
        files = {}
        for k, kind in enumerate(OUTPUTS):
            name = "s%05d_%s.png" % (i, kind)
            render(seed + i + cond_offset, vec, k, scale).save(out_dir / name)
            files[kind] = name
        samples.append({"index": i, "files": files})

    if FAIL_MODE == "extra_file":
        (out_dir / "stray.bin").write_bytes(b"unlisted")

    (request_path.parent / "response.json").write_text(
        json.dumps({"status": "ok", "samples": samples})
    )


if __name__ == "__main__":
    main()
'''

_LICENSE_TEXT = "MIT License (toy fixture package)\n"


def write_toy_package(
    package_dir: Path,
    model_id: str = "00001_TOY_MODEL",
    *,
    outputs: Sequence[str] = ("image",),
    latent_dim: int | None = None,
    conditional: bool = False,
    fail_mode: str = "",
    image_size: tuple[int, int] = (16, 16),
) -> Path:
    """Write a complete toy package (manifest, entrypoint, weights, license)."""
    package_dir = Path(package_dir)
    package_dir.mkdir(parents=True, exist_ok=True)

    script = (
        _GENERATOR_SCRIPT.replace("__WIDTH__", str(image_size[1]))
        .replace("__HEIGHT__", str(image_size[0]))
        .replace("__OUTPUTS__", repr(list(outputs)))
        .replace("__LATENT_DIM__", str(latent_dim or 0))
        .replace("__FAIL_MODE__", repr(fail_mode))
    )
    (package_dir / "generate.py").write_text(script, encoding="utf-8")
    (package_dir / "weights.pt").write_bytes(b"\x93TOYWEIGHTS\x00" + model_id.encode())
    (package_dir / "LICENSE").write_text(_LICENSE_TEXT, encoding="utf-8")

    params = [
        {"name": "weights_path", "kind": "path", "default": "weights.pt", "required": False},
        {"name": "brightness", "kind": "float", "default": 1.0, "required": False},
    ]
    manifest: dict = {
        "model_id": model_id,
        "entrypoint": f"{shlex.quote(sys.executable)} generate.py --request {{request}}",
        "generate_method_name": "generate",
        "params": params,
        "weights": {"name": "weights", "extension": ".pt"},
        "outputs": [{"kind": kind, "file_format": "png"} for kind in outputs],
    }
    if latent_dim:
        manifest["latent_dim"] = latent_dim
        params.append({"name": "input_latent_vector", "kind": "float_list", "default": None, "required": False})
    if conditional:
        manifest["condition"] = {"name": "condition", "values": ["benign", "malignant"]}
        params.append({"name": "condition", "kind": "string", "default": "benign", "required": False})

    (package_dir / "model.manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return package_dir


def toy_metadata(
    model_id: str,
    package_url: str,
    checksum_sha256: str,
    size_bytes: int,
    *,
    keywords: Sequence[str],
    modality: str = "mammography",
    organ: str = "breast",
    metrics: Mapping | None = None,
    title: str = "Toy generative model",
    image_size: tuple[int, int] = (16, 16),
) -> ModelMetadata:
    return ModelMetadata(
        model_id=model_id,
        execution=ExecutionSection(
            package_url=package_url,
            checksum_sha256=checksum_sha256,
            package_size_bytes=size_bytes,
            image_size=tuple(image_size),
            generate_defaults={},
            dependencies=(),
            extension_weights=".pt",
        ),
        selection=SelectionSection(
            keywords=tuple(keywords),
            modality=modality,
            organ=organ,
            metrics=dict(metrics or {}),
        ),
        description=DescriptionSection(
            title=title,
            training_dataset="toy synthetic fixture set",
            license="MIT",
            date="2024-05-01",
            publication="",
        ),
    )


# the three canonical search-fixture models: keywords chosen so AND/OR/XOR
# queries over {patches, mammography} split them apart
FIXTURE_MODELS: tuple[dict, ...] = (
    {
        "model_id": "00001_TOY_PATCH",
        "keywords": ("mammography", "patches"),
        "modality": "mammography",
        "organ": "breast",
        "title": "Toy mammography patch generator",
        "metrics": {"FID": {"ImageNet": {"real-syn": 67.60, "real-real": 33.61}}},
        "options": {},
    },
    {
        "model_id": "00002_TOY_FULL",
        "keywords": ("mammography", "full-field"),
        "modality": "mammography",
        "organ": "breast",
        "title": "Toy full-field mammography generator",
        "metrics": {"FID": {"ImageNet": {"real-syn": 80.51, "real-real": 28.85}}},
        "options": {"latent_dim": 100},
    },
    {
        "model_id": "00003_TOY_POLYP",
        "keywords": ("endoscopy", "patches"),
        "modality": "endoscopy",
        "organ": "colon",
        "title": "Toy polyp generator with masks",
        "metrics": {"FID": {"ImageNet": {"real-syn": 150.16, "real-real": 65.94}}},
        "options": {"outputs": ("image", "mask")},
    },
)


def make_fixture_registry(
    root: Path,
    models: Sequence[dict] = FIXTURE_MODELS,
) -> tuple[Path, RegistryIndex]:
    """Build packages + archives for each model spec, then a registry whose
    package URLs are file:// links to the local archives."""
    root = Path(root)
    packages_dir = root / "packages"
    archives_dir = root / "archives"
    registry_dir = root / "registry"
    for d in (packages_dir, archives_dir, registry_dir):
        d.mkdir(parents=True, exist_ok=True)

    entries: dict[str, ModelMetadata] = {}
    for spec in models:
        model_id = spec["model_id"]
        package_dir = write_toy_package(packages_dir / model_id, model_id, **spec.get("options", {}))
        archive = package_model(package_dir, archives_dir / f"{model_id}.zip")
        entries[model_id] = toy_metadata(
            model_id,
            archive.path.resolve().as_uri(),
            archive.checksum_sha256,
            archive.size_bytes,
            keywords=spec["keywords"],
            modality=spec.get("modality", "mammography"),
            organ=spec.get("organ", "breast"),
            metrics=spec.get("metrics"),
            title=spec.get("title", "Toy generative model"),
        )

    index = RegistryIndex(models=entries)
    index_path = registry_dir / "index.json"
    index_path.write_bytes(serialize_index(index))
    return index_path, index


def build_playground(dest: Path) -> Path:
    """Scaffold a servable playground: fixture registry plus cache dir."""
    dest = Path(dest)
    index_path, _ = make_fixture_registry(dest)
    (dest / "cache").mkdir(exist_ok=True)
    return index_path


def main(argv: Sequence[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    dest = Path(args[0]) if args else Path("genhub_playground")
    index_path = build_playground(dest)
    print(index_path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
