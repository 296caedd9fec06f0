"""Out-of-process model execution via the package wire protocol.

The hub never imports model code. Per chunk it creates ``run_<uuid>/``,
writes ``request.json`` with the fully-resolved parameter map, and invokes
the manifest entrypoint. The package writes its samples into the request's
``output_dir``, a ``response.json`` next to ``request.json``, and exits 0;
anything else is a protocol violation. stdout/stderr land in ``run.log``.

Large requests are chunked (default 32 per chunk, ``GENHUB_CHUNK_SIZE``)
and each chunk's seed is ``base_seed + chunk start offset``, so a package
that derives sample content from ``seed + local_index`` produces the same
bytes regardless of chunk boundaries and partial reruns stay reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import random
import shlex
import shutil
import subprocess
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

from .errors import (
    DependencyError,
    GenerateTimeoutError,
    ModelProcessError,
    ProtocolViolationError,
    ValidationError,
)
from .manifest import LATENT_PARAM, ModelManifest, load_manifest, value_matches_kind
from .registry import ModelMetadata
from .store import CacheEntry, PackageStore, PackageRef

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 32
CHUNK_SIZE_ENV = "GENHUB_CHUNK_SIZE"
DEFAULT_TIMEOUT_S = 600.0

_LOG_TAIL_CHARS = 2000


def default_chunk_size() -> int:
    raw = os.environ.get(CHUNK_SIZE_ENV)
    if raw:
        try:
            value = int(raw)
            if value > 0:
                return value
        except ValueError:
            pass
    return DEFAULT_CHUNK_SIZE


def plan_chunks(num_samples: int, chunk_size: int) -> list[int]:
    """Split a sample count into chunk sizes: all full except a smaller last."""
    if num_samples <= 0 or chunk_size <= 0:
        raise ValidationError("num_samples and chunk_size must be positive")
    full, rest = divmod(num_samples, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


@dataclass
class GenerateRequest:
    model_id: str
    num_samples: int = 1
    output_path: Path | None = None
    save_images: bool = True
    seed: int | None = None
    kwargs: Mapping[str, Any] = field(default_factory=dict)
    chunk_size: int | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S


@dataclass
class SampleRecord:
    index: int
    chunk_index: int
    seed_used: int
    files: dict[str, Path] | None = None
    payloads: dict[str, bytes] | None = None


@dataclass
class GenerateResult:
    records: list[SampleRecord]
    wall_time_ms: float
    output_path: Path | None = None


@dataclass
class StageResult:
    name: str
    passed: bool
    duration_ms: float
    message: str = ""


@dataclass
class TestReport:
    model_id: str
    stages: list[StageResult]

    @property
    def passed(self) -> bool:
        return all(stage.passed for stage in self.stages)


def default_dependency_resolver(dependencies: Sequence[str]) -> list[str]:
    """Treat each dependency string's name token as an executable to find on PATH."""
    missing = []
    for dep in dependencies:
        name = _dependency_name(dep)
        if name and shutil.which(name) is None:
            missing.append(dep)
    return missing


def _dependency_name(dep: str) -> str:
    for sep in ("<", ">", "=", "!", "~", " "):
        dep = dep.split(sep, 1)[0]
    return dep.strip()


class ExecutorHandle:
    """Per-model execution handle; one per model id per hub (lazy singleton).

    Generate calls on the same handle are serialized: packages run with the
    unpacked package directory as working directory.
    """

    def __init__(self, meta: ModelMetadata, cache_entry: CacheEntry, manifest: ModelManifest):
        self.model_id = meta.model_id
        self.meta = meta
        self.cache_entry = cache_entry
        self.manifest = manifest
        self.state = "ready"
        self.buffer_probe: Callable[[int], None] | None = None
        self._lock = threading.Lock()

    @property
    def package_dir(self) -> Path:
        return self.cache_entry.unpacked_dir

    # ------------------------------------------------------------------ setup

    @classmethod
    def initialize(
        cls,
        meta: ModelMetadata,
        store: PackageStore,
        *,
        deps_resolver: Callable[[Sequence[str]], list[str]] | None = None,
        install_dependencies: bool = False,
        installer: Callable[[Sequence[str]], None] | None = None,
    ) -> "ExecutorHandle":
        """Resolve the package, parse its manifest, and check dependencies."""
        entry = store.ensure_present(PackageRef.from_metadata(meta))
        manifest = load_manifest(entry.unpacked_dir)

        unknown = [k for k in meta.execution.generate_defaults if manifest.param(k) is None]
        if unknown:
            raise ValidationError(
                f"registry generate_defaults name parameters the manifest does not declare: {unknown}",
                detail=unknown,
            )

        resolver = deps_resolver or default_dependency_resolver
        missing = resolver(meta.execution.dependencies)
        if missing and install_dependencies and installer is not None:
            installer(missing)
            missing = resolver(meta.execution.dependencies)
        if missing:
            raise DependencyError(missing)

        return cls(meta, entry, manifest)

    # ------------------------------------------------------------- validation

    def resolve_params(self, request: GenerateRequest) -> dict[str, Any]:
        """Merge manifest defaults < registry defaults < request kwargs, then
        type-check every value against its declared kind."""
        manifest = self.manifest
        declared = set(manifest.param_names())
        unknown = [k for k in request.kwargs if k not in declared]
        if unknown:
            raise ValidationError(f"unknown generate parameters for {self.model_id}: {unknown}", detail=unknown)

        resolved: dict[str, Any] = {}
        for param in manifest.params:
            if param.default is not None:
                resolved[param.name] = param.default
        for name, value in self.meta.execution.generate_defaults.items():
            resolved[name] = value
        for name, value in request.kwargs.items():
            resolved[name] = value

        problems: list[str] = []
        for param in manifest.params:
            if param.name not in resolved:
                if param.required:
                    problems.append(f"required parameter {param.name!r} missing")
                continue
            value = resolved[param.name]
            if isinstance(value, tuple):
                value = list(value)
                resolved[param.name] = value
            if not value_matches_kind(param.kind, value):
                problems.append(f"parameter {param.name!r} does not match kind {param.kind!r}")
            if param.kind == "path":
                resolved[param.name] = str(self._resolve_path(value))

        if manifest.latent_dim is not None and LATENT_PARAM in request.kwargs:
            vector = request.kwargs[LATENT_PARAM]
            want_one, want_all = manifest.latent_dim, manifest.latent_dim * request.num_samples
            if len(vector) not in (want_one, want_all):
                problems.append(
                    f"{LATENT_PARAM} length {len(vector)} must be latent_dim ({want_one}) "
                    f"or latent_dim*num_samples ({want_all})"
                )

        condition = manifest.condition
        if condition is not None and condition.name in resolved and condition.values:
            if resolved[condition.name] not in condition.values:
                problems.append(
                    f"condition {condition.name!r} value {resolved[condition.name]!r} "
                    f"not in {list(condition.values)}"
                )

        if request.num_samples <= 0:
            problems.append("num_samples must be positive")
        if problems:
            raise ValidationError("; ".join(problems), detail=problems)
        return resolved

    def _resolve_path(self, value: Any) -> Path:
        path = Path(value)
        if not path.is_absolute():
            path = self.package_dir / path
        return path.resolve()

    # --------------------------------------------------------------- generate

    def generate(self, request: GenerateRequest) -> GenerateResult:
        with self._lock:
            return self._generate_locked(request)

    def _generate_locked(self, request: GenerateRequest) -> GenerateResult:
        started = time.perf_counter()
        params = self.resolve_params(request)
        chunk_size = request.chunk_size or default_chunk_size()
        chunks = plan_chunks(request.num_samples, chunk_size)

        base_seed = request.seed
        if base_seed is None:
            base_seed = random.SystemRandom().randrange(2**31)

        dest: Path | None = None
        if request.save_images:
            dest = Path(request.output_path) if request.output_path else Path("genhub_samples") / self.model_id
            dest.mkdir(parents=True, exist_ok=True)

        full_latent = None
        if (
            self.manifest.latent_dim
            and LATENT_PARAM in params
            and len(params[LATENT_PARAM]) == self.manifest.latent_dim * request.num_samples
            and request.num_samples > 1
        ):
            full_latent = list(params[LATENT_PARAM])

        records: list[SampleRecord] = []
        run_root = Path(tempfile.mkdtemp(prefix="genhub_run_"))
        try:
            offset = 0
            for chunk_index, chunk_n in enumerate(chunks):
                chunk_seed = base_seed + offset
                chunk_params = dict(params)
                if full_latent is not None:
                    lo = offset * self.manifest.latent_dim
                    hi = (offset + chunk_n) * self.manifest.latent_dim
                    chunk_params[LATENT_PARAM] = full_latent[lo:hi]
                samples = self._run_chunk(run_root, chunk_n, chunk_seed, chunk_params, request.timeout_s)
                buffered = 0
                for local_index, files in samples:
                    global_index = offset + local_index
                    record = SampleRecord(index=global_index, chunk_index=chunk_index, seed_used=chunk_seed)
                    if request.save_images:
                        record.files = {
                            kind: self._place_file(path, dest, global_index, kind)
                            for kind, path in files.items()
                        }
                    else:
                        record.payloads = {kind: path.read_bytes() for kind, path in files.items()}
                        buffered += 1
                    records.append(record)
                if self.buffer_probe is not None:
                    self.buffer_probe(buffered if not request.save_images else chunk_n)
                offset += chunk_n
        finally:
            shutil.rmtree(run_root, ignore_errors=True)

        wall_ms = (time.perf_counter() - started) * 1000.0
        return GenerateResult(records=records, wall_time_ms=wall_ms, output_path=dest)

    def _place_file(self, src: Path, dest: Path, global_index: int, kind: str) -> Path:
        suffix = src.suffix
        if len(self.manifest.outputs) > 1:
            name = f"sample_{global_index:05d}_{kind}{suffix}"
        else:
            name = f"sample_{global_index:05d}{suffix}"
        target = dest / name
        shutil.move(str(src), target)
        return target

    def _run_chunk(
        self,
        run_root: Path,
        num_samples: int,
        seed: int,
        params: Mapping[str, Any],
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ) -> list[tuple[int, dict[str, Path]]]:
        run_dir = run_root / f"run_{uuid.uuid4().hex}"
        out_dir = run_dir / "out"
        out_dir.mkdir(parents=True)
        request_path = run_dir / "request.json"
        request_path.write_text(
            json.dumps(
                {
                    "model_id": self.model_id,
                    "num_samples": num_samples,
                    "seed": seed,
                    "output_dir": str(out_dir),
                    "params": {k: v for k, v in params.items()},
                },
                indent=2,
            ),
            encoding="utf-8",
        )

        argv = self._build_argv(request_path)
        log_path = run_dir / "run.log"
        with open(log_path, "wb") as log_file:
            try:
                proc = subprocess.run(
                    argv,
                    cwd=self.package_dir,
                    stdout=log_file,
                    stderr=subprocess.STDOUT,
                    timeout=timeout_s,
                )
            except subprocess.TimeoutExpired as exc:
                raise GenerateTimeoutError(f"model {self.model_id} chunk timed out after {exc.timeout}s") from exc
        if proc.returncode != 0:
            tail = _read_tail(log_path)
            raise ModelProcessError(
                f"model {self.model_id} entrypoint exited {proc.returncode}",
                exit_code=proc.returncode,
                log_tail=tail,
            )
        return self._read_response(run_dir, out_dir, num_samples)

    def _build_argv(self, request_path: Path) -> list[str]:
        parts = shlex.split(self.manifest.entrypoint)
        if any("{request}" in part for part in parts):
            return [part.replace("{request}", str(request_path)) for part in parts]
        return parts + ["--request", str(request_path)]

    def _read_response(self, run_dir: Path, out_dir: Path, num_samples: int) -> list[tuple[int, dict[str, Path]]]:
        response_path = run_dir / "response.json"
        if not response_path.is_file():
            raise ProtocolViolationError(f"model {self.model_id} wrote no response.json")
        try:
            response = json.loads(response_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ProtocolViolationError(f"model {self.model_id} response.json is not valid JSON: {exc}") from exc
        if response.get("status") != "ok":
            raise ProtocolViolationError(f"model {self.model_id} response status {response.get('status')!r}")

        samples = response.get("samples")
        if not isinstance(samples, list) or len(samples) != num_samples:
            got = len(samples) if isinstance(samples, list) else "none"
            raise ProtocolViolationError(
                f"model {self.model_id} returned {got} samples, expected {num_samples}"
            )

        declared = set(self.manifest.output_kinds())
        seen_indices: set[int] = set()
        referenced: set[Path] = set()
        ordered: list[tuple[int, dict[str, Path]]] = []
        for sample in samples:
            index = sample.get("index")
            files = sample.get("files")
            if not isinstance(index, int) or index in seen_indices or not 0 <= index < num_samples:
                raise ProtocolViolationError(f"model {self.model_id} returned bad sample index {index!r}")
            seen_indices.add(index)
            if not isinstance(files, dict) or set(files) != declared:
                raise ProtocolViolationError(
                    f"model {self.model_id} sample {index} outputs {sorted(files or ())} != declared {sorted(declared)}"
                )
            resolved: dict[str, Path] = {}
            for kind, rel in files.items():
                path = (out_dir / rel).resolve()
                if not str(path).startswith(str(out_dir.resolve())) or not path.is_file():
                    raise ProtocolViolationError(f"model {self.model_id} sample {index} missing file {rel!r}")
                resolved[kind] = path
                referenced.add(path)
            ordered.append((index, resolved))

        actual = {p.resolve() for p in out_dir.rglob("*") if p.is_file()}
        extras = actual - referenced
        if extras:
            names = sorted(p.name for p in extras)
            raise ProtocolViolationError(f"model {self.model_id} wrote unreferenced files: {names}")

        ordered.sort(key=lambda item: item[0])
        return ordered

    # ------------------------------------------------------------ diagnostics

    def test(self) -> list[StageResult]:
        """Generate and output-schema smoke stages (resolve/manifest/dependency
        are covered by handle initialization)."""
        stages: list[StageResult] = []
        with tempfile.TemporaryDirectory(prefix="genhub_test_") as tmp:
            started = time.perf_counter()
            try:
                result = self.generate(
                    GenerateRequest(model_id=self.model_id, num_samples=3, seed=0, output_path=Path(tmp))
                )
                stages.append(_stage("generate", True, started))
            except ProtocolViolationError as exc:
                stages.append(_stage("generate", True, started))
                stages.append(_stage("output-schema", False, started, str(exc)))
                return stages
            except Exception as exc:  # noqa: BLE001 - report, don't raise
                stages.append(_stage("generate", False, started, str(exc)))
                return stages

            started = time.perf_counter()
            ok = len(result.records) == 3 and all(
                path.is_file() for record in result.records for path in (record.files or {}).values()
            )
            stages.append(_stage("output-schema", ok, started, "" if ok else "records/files incomplete"))
        return stages


def _stage(name: str, passed: bool, started: float, message: str = "") -> StageResult:
    return StageResult(name=name, passed=passed, duration_ms=(time.perf_counter() - started) * 1000.0, message=message)


def _read_tail(log_path: Path) -> str:
    try:
        text = log_path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return ""
    return text[-_LOG_TAIL_CHARS:]


def run_test_pipeline(
    meta: ModelMetadata,
    store: PackageStore,
    *,
    deps_resolver: Callable[[Sequence[str]], list[str]] | None = None,
) -> TestReport:
    """Full staged test of one model: resolve, manifest, dependency, generate,
    output-schema. Failures are report content, never exceptions."""
    stages: list[StageResult] = []

    started = time.perf_counter()
    try:
        entry = store.ensure_present(PackageRef.from_metadata(meta))
        stages.append(_stage("resolve", True, started))
    except Exception as exc:  # noqa: BLE001
        stages.append(_stage("resolve", False, started, str(exc)))
        return TestReport(model_id=meta.model_id, stages=stages)

    started = time.perf_counter()
    try:
        manifest = load_manifest(entry.unpacked_dir)
        stages.append(_stage("manifest", True, started))
    except Exception as exc:  # noqa: BLE001
        stages.append(_stage("manifest", False, started, str(exc)))
        return TestReport(model_id=meta.model_id, stages=stages)

    started = time.perf_counter()
    resolver = deps_resolver or default_dependency_resolver
    missing = resolver(meta.execution.dependencies)
    if missing:
        stages.append(_stage("dependency", False, started, f"missing: {missing}"))
        return TestReport(model_id=meta.model_id, stages=stages)
    stages.append(_stage("dependency", True, started))

    handle = ExecutorHandle(meta, entry, manifest)
    stages.extend(handle.test())
    return TestReport(model_id=meta.model_id, stages=stages)


def sample_batches(
    generate: Callable[..., GenerateResult],
    batch_size: int,
    total: int | None = None,
    seed: int | None = None,
) -> Iterator[list[SampleRecord]]:
    """Pull-based batch stream over a generate callable; at most one batch
    is buffered. Finite when ``total`` is set, else unbounded."""
    if batch_size <= 0:
        raise ValidationError("batch_size must be positive")
    produced = 0
    while total is None or produced < total:
        n = batch_size if total is None else min(batch_size, total - produced)
        kwargs: dict[str, Any] = {"num_samples": n, "save_images": False}
        if seed is not None:
            kwargs["seed"] = seed + produced
        result = generate(**kwargs)
        yield result.records
        produced += n
