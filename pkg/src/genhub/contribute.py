"""Model contribution workflow: validate, build metadata, package, test,
upload, submit — plus the all-models test pipeline.

Storage and tracker are abstract HTTP clients; `genhub.stubserver` bundles
a local implementation of both so the whole workflow runs offline. Archives
are built deterministically (fixed timestamps, sorted entries, fixed file
attributes) so the same package always yields the same checksum.
"""

from __future__ import annotations

import json
import logging
import shlex
import shutil
import time
import urllib.error
import urllib.request
import uuid
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from .errors import AuthError, NetworkError, QuotaError, ValidationError
from .executor import TestReport, run_test_pipeline
from .manifest import (
    MANIFEST_NAME,
    ManifestParam,
    ModelManifest,
    OutputSpec,
    WeightsSpec,
    load_manifest,
    parse_manifest,
    write_manifest,
)
from .registry import (
    DescriptionSection,
    ExecutionSection,
    Finding,
    ModelMetadata,
    MODEL_ID_PATTERN,
    RegistryIndex,
    SelectionSection,
    ValidationReport,
    validate_entry,
)
from .store import PackageStore, sha256_file, with_retries

logger = logging.getLogger(__name__)

# fixed ZIP entry timestamp (ZIP's minimum representable date)
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class ContributionInput:
    model_id: str
    package_dir: Path
    generate_method_name: str = "generate"
    weights_name: str = "weights"
    weights_extension: str = ".pt"
    dependencies: tuple[str, ...] = ()
    entrypoint: str | None = None
    # metadata seeds
    title: str = ""
    license: str = ""
    training_dataset: str = ""
    date: str = ""
    publication: str = ""
    keywords: tuple[str, ...] = ()
    modality: str = ""
    organ: str = ""
    metrics: Mapping = field(default_factory=dict)
    image_size: tuple = ()
    generate_defaults: Mapping = field(default_factory=dict)
    # credentials
    storage_token: str = ""
    tracker_token: str = ""


@dataclass(frozen=True)
class PackagedArchive:
    path: Path
    checksum_sha256: str
    size_bytes: int


@dataclass(frozen=True)
class StorageReceipt:
    record_id: str
    download_url: str
    checksum_sha256: str
    size_bytes: int


@dataclass
class Submission:
    model_id: str
    metadata: ModelMetadata
    receipt: StorageReceipt
    status: str
    created_at: str
    issue_id: str = ""
    warnings: tuple[str, ...] = ()


@dataclass
class PipelineReport:
    reports: list[TestReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def format_matrix(self) -> str:
        stage_names = ["resolve", "manifest", "dependency", "generate", "output-schema"]
        header = f"{'model':<28}" + "".join(f"{s:>14}" for s in stage_names) + f"{'ms':>9}"
        lines = [header, "-" * len(header)]
        for report in self.reports:
            by_name = {s.name: s for s in report.stages}
            cells = []
            for name in stage_names:
                stage = by_name.get(name)
                cells.append("-" if stage is None else ("pass" if stage.passed else "FAIL"))
            total_ms = sum(s.duration_ms for s in report.stages)
            lines.append(f"{report.model_id:<28}" + "".join(f"{c:>14}" for c in cells) + f"{total_ms:>9.0f}")
        return "\n".join(lines)


def validate_contribution(inp: ContributionInput) -> ValidationReport:
    """Checks before any packaging work: id pattern, package layout, weights
    presence, entrypoint executability, manifest synthesizability."""
    findings: list[Finding] = []
    package_dir = Path(inp.package_dir)

    if not MODEL_ID_PATTERN.match(inp.model_id or ""):
        findings.append(Finding("model_id", "must match five digits, underscore, then [A-Z0-9_]+"))
    if not package_dir.is_dir():
        findings.append(Finding("package_dir", f"not a directory: {package_dir}"))
        return ValidationReport(tuple(findings))
    if not any(package_dir.iterdir()):
        findings.append(Finding("package_dir", "directory is empty"))
        return ValidationReport(tuple(findings))

    weights_file = package_dir / f"{inp.weights_name}{inp.weights_extension}"
    if not weights_file.is_file():
        findings.append(Finding("weights", f"weights file {weights_file.name!r} not found in package"))

    manifest_path = package_dir / MANIFEST_NAME
    entrypoint = inp.entrypoint
    if manifest_path.is_file():
        try:
            manifest = parse_manifest(manifest_path.read_bytes())
            entrypoint = entrypoint or manifest.entrypoint
        except ValidationError as exc:
            findings.append(Finding("manifest", str(exc)))
    elif entrypoint is None:
        findings.append(
            Finding("manifest", f"package has no {MANIFEST_NAME} and no entrypoint was provided")
        )

    if entrypoint:
        head = shlex.split(entrypoint)[0]
        if not (shutil.which(head) or (package_dir / head).is_file() or Path(head).is_file()):
            findings.append(Finding("entrypoint", f"command {head!r} is not executable here"))

    return ValidationReport(tuple(findings))


def ensure_manifest(inp: ContributionInput) -> ModelManifest:
    """Load the package's manifest, or synthesize and write one from the
    contribution input."""
    package_dir = Path(inp.package_dir)
    if (package_dir / MANIFEST_NAME).is_file():
        return load_manifest(package_dir)
    if inp.entrypoint is None:
        raise ValidationError(f"cannot synthesize manifest without an entrypoint for {inp.model_id}")
    manifest = ModelManifest(
        model_id=inp.model_id,
        entrypoint=inp.entrypoint,
        generate_method_name=inp.generate_method_name,
        params=(
            ManifestParam(
                name="weights_path", kind="path", default=f"{inp.weights_name}{inp.weights_extension}"
            ),
        ),
        weights=WeightsSpec(name=inp.weights_name, extension=inp.weights_extension),
        outputs=(OutputSpec(kind="image", file_format="png"),),
    )
    write_manifest(package_dir, manifest)
    return load_manifest(package_dir)


def build_metadata(inp: ContributionInput, manifest: ModelManifest) -> ModelMetadata:
    """Assemble the registry entry. package_url/checksum/size stay deferred
    until upload produces a receipt."""
    meta = ModelMetadata(
        model_id=inp.model_id,
        execution=ExecutionSection(
            package_url="",
            checksum_sha256="",
            package_size_bytes=0,
            image_size=tuple(inp.image_size),
            generate_defaults=dict(inp.generate_defaults),
            dependencies=tuple(inp.dependencies),
            extension_weights=inp.weights_extension,
        ),
        selection=SelectionSection(
            keywords=tuple(k.lower() for k in inp.keywords),
            modality=inp.modality,
            organ=inp.organ,
            metrics=dict(inp.metrics),
        ),
        description=DescriptionSection(
            title=inp.title,
            training_dataset=inp.training_dataset,
            license=inp.license,
            date=inp.date or datetime.now(timezone.utc).date().isoformat(),
            publication=inp.publication,
        ),
    )
    report = validate_entry(meta, allow_deferred=True)
    if not report.ok:
        raise ValidationError(f"contribution metadata invalid: {report}", detail=report)
    unknown = [k for k in inp.generate_defaults if manifest.param(k) is None]
    if unknown:
        raise ValidationError(f"generate_defaults name undeclared manifest parameters: {unknown}")
    return meta


def package_model(package_dir: Path, out_path: Path | None = None) -> PackagedArchive:
    """Deterministic ZIP of the package directory.

    Entries are sorted, timestamps pinned to the ZIP epoch, permissions and
    create-system fixed, so two runs (and any directory enumeration order)
    produce byte-identical archives.
    """
    package_dir = Path(package_dir)
    if not package_dir.is_dir() or not any(package_dir.iterdir()):
        raise ValidationError(f"nothing to package at {package_dir}")
    if out_path is None:
        out_path = package_dir.parent / f"{package_dir.name}.zip"
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    files = sorted(
        (p for p in package_dir.rglob("*") if p.is_file()),
        key=lambda p: p.relative_to(package_dir).as_posix(),
    )
    with zipfile.ZipFile(out_path, "w", compression=zipfile.ZIP_DEFLATED, compresslevel=9) as zf:
        for path in files:
            arcname = path.relative_to(package_dir).as_posix()
            info = zipfile.ZipInfo(filename=arcname, date_time=_ZIP_EPOCH)
            info.create_system = 3  # unix, regardless of build host
            info.external_attr = 0o644 << 16
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, path.read_bytes())
    checksum = sha256_file(out_path)
    return PackagedArchive(path=out_path, checksum_sha256=checksum, size_bytes=out_path.stat().st_size)


class HttpStorageClient:
    """POSTs archives to the storage backend as multipart/form-data."""

    def __init__(self, base_url: str, token: str, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self._sleep = sleep

    def upload(self, archive_path: Path) -> StorageReceipt:
        archive_path = Path(archive_path)
        body, content_type = _multipart_body(archive_path)

        def attempt() -> StorageReceipt:
            request = urllib.request.Request(
                f"{self.base_url}/records",
                data=body,
                method="POST",
                headers={
                    "Content-Type": content_type,
                    "Authorization": f"Bearer {self.token}",
                },
            )
            try:
                with urllib.request.urlopen(request) as response:
                    payload = json.loads(response.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403):
                    raise AuthError(f"storage rejected token (HTTP {exc.code})") from exc
                if exc.code == 413:
                    raise QuotaError("storage rejected upload: too large") from exc
                raise NetworkError(f"storage upload failed: HTTP {exc.code}") from exc
            except (urllib.error.URLError, OSError) as exc:
                raise NetworkError(f"storage upload failed: {exc}") from exc
            return StorageReceipt(
                record_id=str(payload["record_id"]),
                download_url=str(payload["download_url"]),
                checksum_sha256=str(payload["checksum_sha256"]),
                size_bytes=int(payload["size_bytes"]),
            )

        return with_retries(attempt, sleep=self._sleep)


class HttpTrackerClient:
    """Creates submission issues on the tracker backend."""

    def __init__(self, base_url: str, token: str, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self._sleep = sleep

    def create_issue(self, title: str, body: str) -> str:
        data = json.dumps({"title": title, "body": body}).encode("utf-8")

        def attempt() -> str:
            request = urllib.request.Request(
                f"{self.base_url}/issues",
                data=data,
                method="POST",
                headers={
                    "Content-Type": "application/json",
                    "Authorization": f"Bearer {self.token}",
                },
            )
            try:
                with urllib.request.urlopen(request) as response:
                    payload = json.loads(response.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403):
                    raise AuthError(f"tracker rejected token (HTTP {exc.code})") from exc
                raise NetworkError(f"issue creation failed: HTTP {exc.code}") from exc
            except (urllib.error.URLError, OSError) as exc:
                raise NetworkError(f"issue creation failed: {exc}") from exc
            return str(payload["issue_id"])

        return with_retries(attempt, sleep=self._sleep)


def _multipart_body(archive_path: Path) -> tuple[bytes, str]:
    boundary = f"genhub-{uuid.uuid4().hex}"
    head = (
        f"--{boundary}\r\n"
        f'Content-Disposition: form-data; name="file"; filename="{archive_path.name}"\r\n'
        f"Content-Type: application/zip\r\n\r\n"
    ).encode("utf-8")
    tail = f"\r\n--{boundary}--\r\n".encode("utf-8")
    return head + archive_path.read_bytes() + tail, f"multipart/form-data; boundary={boundary}"


def upload(archive: PackagedArchive, storage_client) -> StorageReceipt:
    """Push the archive; the receipt's checksum must echo the local one."""
    receipt = storage_client.upload(archive.path)
    if receipt.checksum_sha256 != archive.checksum_sha256:
        raise ValidationError(
            "storage receipt checksum does not match local archive "
            f"({receipt.checksum_sha256} != {archive.checksum_sha256})"
        )
    return receipt


def finalize_metadata(meta: ModelMetadata, receipt: StorageReceipt) -> ModelMetadata:
    """Fill the deferred execution fields from the storage receipt."""
    execution = ExecutionSection(
        package_url=receipt.download_url,
        checksum_sha256=receipt.checksum_sha256,
        package_size_bytes=receipt.size_bytes,
        image_size=meta.execution.image_size,
        generate_defaults=meta.execution.generate_defaults,
        dependencies=meta.execution.dependencies,
        extension_weights=meta.execution.extension_weights,
    )
    return ModelMetadata(
        model_id=meta.model_id,
        execution=execution,
        selection=meta.selection,
        description=meta.description,
    )


def submit(
    metadata: ModelMetadata,
    receipt: StorageReceipt,
    tracker_client,
    index: RegistryIndex | None = None,
) -> Submission:
    """Create the tracker record carrying the full metadata document.

    A duplicate id against the current index is a warning, not a rejection:
    maintainers decide whether it is a version bump.
    """
    metadata = finalize_metadata(metadata, receipt)
    report = validate_entry(metadata)
    if not report.ok:
        raise ValidationError(f"submission metadata invalid: {report}", detail=report)

    warnings: list[str] = []
    if index is not None and metadata.model_id in index:
        warnings.append(f"model id {metadata.model_id} already exists in the registry")

    document = json.dumps({metadata.model_id: metadata.to_dict()}, indent=2, sort_keys=True)
    title = f"Model submission: {metadata.model_id}"
    body = f"Download: {receipt.download_url}\n\nMetadata:\n```json\n{document}\n```\n"
    issue_id = tracker_client.create_issue(title, body)
    return Submission(
        model_id=metadata.model_id,
        metadata=metadata,
        receipt=receipt,
        status="open",
        created_at=datetime.now(timezone.utc).isoformat(),
        issue_id=issue_id,
        warnings=tuple(warnings),
    )


@dataclass
class ContributionResult:
    submission: Submission
    archive: PackagedArchive
    test_report: TestReport


def contribute(
    inp: ContributionInput,
    storage_client,
    tracker_client,
    index: RegistryIndex | None = None,
    *,
    store: PackageStore | None = None,
    skip_test: bool = False,
) -> ContributionResult:
    """Run the whole workflow: validate, manifest, metadata, package,
    end-to-end generation test, upload, submit."""
    report = validate_contribution(inp)
    if not report.ok:
        raise ValidationError(f"contribution invalid: {report}", detail=report)

    manifest = ensure_manifest(inp)
    metadata = build_metadata(inp, manifest)
    archive = package_model(inp.package_dir)

    if not skip_test:
        test_report = test_packaged_archive(metadata, archive, store=store)
        if not test_report.passed:
            failed = [s.name for s in test_report.stages if not s.passed]
            raise ValidationError(
                f"packaged model failed its generation test (stages: {failed})", detail=test_report
            )
    else:
        test_report = TestReport(model_id=inp.model_id, stages=[])

    receipt = upload(archive, storage_client)
    submission = submit(metadata, receipt, tracker_client, index=index)
    logger.info("submitted %s as issue %s", inp.model_id, submission.issue_id)
    return ContributionResult(submission=submission, archive=archive, test_report=test_report)


def test_packaged_archive(
    metadata: ModelMetadata, archive: PackagedArchive, *, store: PackageStore | None = None
) -> TestReport:
    """End-to-end test of the freshly built archive before any upload,
    through the same resolve/unpack/generate path end users hit."""
    import tempfile

    with tempfile.TemporaryDirectory(prefix="genhub_contrib_") as tmp:
        local_store = store or PackageStore(cache_root=Path(tmp) / "cache")
        staged = finalize_metadata(
            metadata,
            StorageReceipt(
                record_id="local",
                download_url=archive.path.resolve().as_uri(),
                checksum_sha256=archive.checksum_sha256,
                size_bytes=archive.size_bytes,
            ),
        )
        return run_test_pipeline(staged, local_store)


def test_all(index: RegistryIndex, store: PackageStore, parallelism: int = 4) -> PipelineReport:
    """Run the staged model test for every registry entry; empty index is a
    trivial pass (with a warning logged)."""
    entries = list(index)
    if not entries:
        logger.warning("test_all called on an empty registry index")
        return PipelineReport(reports=[])
    workers = max(1, min(parallelism, len(entries)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(lambda meta: run_test_pipeline(meta, store), entries))
    reports.sort(key=lambda r: r.model_id)
    return PipelineReport(reports=reports)


def apply_submission(index: RegistryIndex, submission: Submission) -> RegistryIndex:
    """Maintainer-side helper: upsert an accepted submission into the index."""
    from .registry import upsert_entry

    return upsert_entry(index, submission.metadata)
