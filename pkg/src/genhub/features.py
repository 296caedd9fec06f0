"""Image normalization, pluggable feature extractors, and the feature file.

The Inception-style backbones behind published FID magnitudes are not
bundled; extractors are swappable instead. Built-ins:

* ``identity-pool`` — bilinear resize of each channel to 8x8 and flatten
  (D = 64 x channels); deterministic, dependency-free.
* external file — ingest a feature table computed elsewhere, keyed by
  sample id, so published backbone features can be dropped in.
* command — delegate to an external extractor executable through the same
  request.json/run-dir protocol that model packages use.

Feature file format (JSON): {"extractor_id": str, "dim": int,
"rows": [{"sample_id": str, "values": [float, ...]}, ...]}.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import ModelProcessError, ProtocolViolationError, ValidationError
from .metrics import FeatureMatrix

NORMALIZE_MODES = ("none", "unit_range")


def normalize_images(images: np.ndarray, mode: str = "none") -> np.ndarray:
    """Scale integer images into [0, 1] by the dtype's maximum intensity.

    ``none`` returns the input unchanged; ``unit_range`` divides uint8 by
    255, uint16 by 65535, and so on.
    """
    if mode == "none":
        return images
    if mode != "unit_range":
        raise ValidationError(f"unknown normalization mode {mode!r}")
    arr = np.asarray(images)
    if arr.dtype.kind != "u" and arr.dtype.kind != "i":
        raise ValidationError(f"unsupported dtype for unit_range: {arr.dtype}")
    info = np.iinfo(arr.dtype)
    if info.max <= 0:
        raise ValidationError(f"unsupported dtype for unit_range: {arr.dtype}")
    return arr.astype(np.float64) / float(info.max)


def _bilinear_resize(channel: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center-aligned bilinear sampling of one 2-D channel."""
    in_h, in_w = channel.shape
    src = channel.astype(np.float64)

    def coords(n_out, n_in):
        scale = n_in / n_out
        centers = (np.arange(n_out) + 0.5) * scale - 0.5
        centers = np.clip(centers, 0, n_in - 1)
        lo = np.floor(centers).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = centers - lo
        return lo, hi, frac

    y0, y1, fy = coords(out_h, in_h)
    x0, x1, fx = coords(out_w, in_w)
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy[:, None]) + bottom * fy[:, None]


class IdentityPoolExtractor:
    """Bilinear 8x8 pooling per channel; D = 64 x channels."""

    extractor_id = "identity-pool"
    deterministic = True
    pool_size = 8

    def extract(self, images: Sequence[np.ndarray] | np.ndarray) -> FeatureMatrix:
        rows = []
        for image in images:
            arr = np.asarray(image, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[:, :, None]
            if arr.ndim != 3:
                raise ValidationError(f"expected HxW or HxWxC image, got shape {arr.shape}")
            pooled = [
                _bilinear_resize(arr[:, :, c], self.pool_size, self.pool_size).ravel()
                for c in range(arr.shape[2])
            ]
            rows.append(np.concatenate(pooled))
        if len({r.shape[0] for r in rows}) > 1:
            raise ValidationError("images disagree on channel count")
        return FeatureMatrix(np.stack(rows), extractor_id=self.extractor_id)


def write_feature_file(path: Path, extractor_id: str, rows: dict[str, Sequence[float]]) -> None:
    dims = {len(v) for v in rows.values()}
    if len(dims) > 1:
        raise ValidationError(f"feature rows disagree on dimension: {sorted(dims)}")
    payload = {
        "extractor_id": extractor_id,
        "dim": dims.pop() if dims else 0,
        "rows": [{"sample_id": k, "values": [float(x) for x in rows[k]]} for k in sorted(rows)],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_feature_file(path: Path) -> tuple[str, dict[str, np.ndarray]]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read feature file {path}: {exc}") from exc
    extractor_id = payload.get("extractor_id")
    dim = payload.get("dim")
    rows_raw = payload.get("rows")
    if not isinstance(extractor_id, str) or not isinstance(dim, int) or not isinstance(rows_raw, list):
        raise ValidationError(f"feature file {path} lacks extractor_id/dim/rows header")
    rows: dict[str, np.ndarray] = {}
    for i, row in enumerate(rows_raw):
        sample_id, values = row.get("sample_id"), row.get("values")
        if not isinstance(sample_id, str) or not isinstance(values, list) or len(values) != dim:
            raise ValidationError(f"feature file row {i} malformed (expected {dim} values)")
        rows[sample_id] = np.asarray(values, dtype=np.float64)
    return extractor_id, rows


class ExternalFileExtractor:
    """Serves precomputed feature rows from a feature file, keyed by sample id."""

    deterministic = True

    def __init__(self, path: Path):
        self.path = Path(path)
        self.extractor_id, self._rows = read_feature_file(self.path)

    def extract(self, sample_ids: Sequence[str] | None = None) -> FeatureMatrix:
        ids = sorted(self._rows) if sample_ids is None else list(sample_ids)
        missing = [i for i in ids if i not in self._rows]
        if missing:
            raise ValidationError(f"feature file {self.path} lacks rows for ids: {missing}")
        return FeatureMatrix(np.stack([self._rows[i] for i in ids]), extractor_id=self.extractor_id)


class CommandExtractor:
    """Runs an external extractor executable.

    The hub writes the images as PNGs into ``<run>/in/``, writes
    ``request.json`` {input_dir, output_file}, and invokes the command
    (``{request}`` token substituted, else ``--request`` appended). The
    executable must write a feature file at ``output_file`` covering every
    written sample id and exit 0.
    """

    deterministic = True

    def __init__(self, command: str, extractor_id: str = "command"):
        self.command = command
        self.extractor_id = extractor_id

    def extract(self, images: Sequence[np.ndarray] | np.ndarray) -> FeatureMatrix:
        import shlex

        with tempfile.TemporaryDirectory(prefix="genhub_extract_") as tmp:
            run_dir = Path(tmp)
            in_dir = run_dir / "in"
            in_dir.mkdir()
            ids = []
            for i, image in enumerate(images):
                sample_id = f"sample_{i:05d}"
                save_image_array(np.asarray(image), in_dir / f"{sample_id}.png")
                ids.append(sample_id)
            out_file = run_dir / "features.json"
            request_path = run_dir / "request.json"
            request_path.write_text(
                json.dumps({"input_dir": str(in_dir), "output_file": str(out_file)}), encoding="utf-8"
            )
            parts = shlex.split(self.command)
            if any("{request}" in p for p in parts):
                argv = [p.replace("{request}", str(request_path)) for p in parts]
            else:
                argv = parts + ["--request", str(request_path)]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise ModelProcessError(
                    f"extractor command exited {proc.returncode}",
                    exit_code=proc.returncode,
                    log_tail=proc.stderr[-2000:],
                )
            if not out_file.is_file():
                raise ProtocolViolationError("extractor command wrote no feature file")
            file_extractor_id, rows = read_feature_file(out_file)
            missing = [i for i in ids if i not in rows]
            if missing:
                raise ProtocolViolationError(f"extractor feature file lacks ids: {missing}")
            return FeatureMatrix(
                np.stack([rows[i] for i in ids]),
                extractor_id=file_extractor_id or self.extractor_id,
            )


def get_extractor(name: str):
    if name == "identity-pool":
        return IdentityPoolExtractor()
    raise ValidationError(f"unknown extractor {name!r} (built-in: identity-pool)")


def save_image_array(array: np.ndarray, path: Path) -> None:
    arr = np.asarray(array)
    if arr.dtype.kind == "f":
        arr = np.clip(arr * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def load_images_from_dir(directory: Path) -> tuple[list[str], list[np.ndarray]]:
    """Load every PNG in a directory, sorted by filename; ids are stems."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise ValidationError(f"no .png images in {directory}")
    ids, images = [], []
    for path in paths:
        with Image.open(path) as img:
            images.append(np.asarray(img))
        ids.append(path.stem)
    return ids, images
