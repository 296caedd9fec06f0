"""Checksum-verified download, caching, and unpacking of model packages.

Cache layout, one slot per (model, checksum):

    <cache_root>/<model_id>/<checksum_prefix8>/
        archive.zip     verified package archive
        pkg/            unpacked contents (model.manifest at root)
        entry.json      verification marker, written last
        .lock           per-slot download lock

A registry checksum bump lands in a fresh slot, so stale packages never
shadow new ones. Partial downloads are never visible: everything is staged
under temporary names and renamed into place only after the checksum and
manifest checks pass; ``entry.json`` is the final commit marker.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
import urllib.error
import urllib.request
import zipfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .errors import ArchiveFormatError, ChecksumMismatchError, MissingManifestError, NetworkError
from .manifest import MANIFEST_NAME
from .registry import ModelMetadata

logger = logging.getLogger(__name__)

DEFAULT_CACHE_ROOT = Path.home() / ".genhub" / "cache"
CACHE_ENV = "GENHUB_CACHE"

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = (1.0, 2.0, 4.0)

_HASH_CHUNK = 1024 * 1024


@dataclass(frozen=True)
class PackageRef:
    model_id: str
    url: str
    checksum_sha256: str
    size_bytes: int = 0

    @classmethod
    def from_metadata(cls, meta: ModelMetadata) -> "PackageRef":
        return cls(
            model_id=meta.model_id,
            url=meta.execution.package_url,
            checksum_sha256=meta.execution.checksum_sha256.lower(),
            size_bytes=meta.execution.package_size_bytes,
        )


@dataclass(frozen=True)
class CacheEntry:
    model_id: str
    archive_path: Path
    unpacked_dir: Path
    verified_at: str
    checksum_sha256: str


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    actual: str


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        while chunk := handle.read(_HASH_CHUNK):
            digest.update(chunk)
    return digest.hexdigest()


def verify(archive_path: Path, checksum_sha256: str) -> VerifyResult:
    """Stream-hash a file against an expected digest."""
    actual = sha256_file(Path(archive_path))
    return VerifyResult(ok=actual == checksum_sha256.lower(), actual=actual)


class HttpTransport:
    """Streams a URL to a local file via urllib (http, https, and file URLs)."""

    def fetch(self, url: str, dest: Path) -> None:
        try:
            with urllib.request.urlopen(url) as response, open(dest, "wb") as out:
                shutil.copyfileobj(response, out, _HASH_CHUNK)
        except (urllib.error.URLError, OSError) as exc:
            raise NetworkError(f"download failed for {url}: {exc}") from exc


class PackageStore:
    """Thread-safe package cache; per-slot lock files serialize downloads."""

    def __init__(self, cache_root: Path | str | None = None, transport=None, sleep=time.sleep):
        if cache_root is None:
            cache_root = os.environ.get(CACHE_ENV) or DEFAULT_CACHE_ROOT
        # absolute: packages run with the unpacked dir as cwd, so every
        # path handed to them must not depend on the hub's cwd
        self.cache_root = Path(cache_root).expanduser().resolve()
        self.transport = transport or HttpTransport()
        self._sleep = sleep

    def slot_dir(self, ref: PackageRef) -> Path:
        return self.cache_root / ref.model_id / ref.checksum_sha256[:8]

    def _entry_path(self, slot: Path) -> Path:
        return slot / "entry.json"

    def _load_entry(self, ref: PackageRef) -> CacheEntry | None:
        slot = self.slot_dir(ref)
        marker = self._entry_path(slot)
        archive = slot / "archive.zip"
        unpacked = slot / "pkg"
        if not (marker.is_file() and archive.is_file() and (unpacked / MANIFEST_NAME).is_file()):
            return None
        data = json.loads(marker.read_text(encoding="utf-8"))
        if data.get("checksum_sha256") != ref.checksum_sha256:
            return None
        return CacheEntry(
            model_id=ref.model_id,
            archive_path=archive,
            unpacked_dir=unpacked,
            verified_at=data.get("verified_at", ""),
            checksum_sha256=ref.checksum_sha256,
        )

    def ensure_present(self, ref: PackageRef) -> CacheEntry:
        """Return a verified cache entry, downloading and unpacking on miss.

        A hit performs zero network requests. Concurrent calls for the same
        ref serialize on the slot lock and the loser reuses the winner's work.
        """
        slot = self.slot_dir(ref)
        slot.mkdir(parents=True, exist_ok=True)
        with FileLock(str(slot / ".lock")):
            entry = self._load_entry(ref)
            if entry is not None:
                return entry
            return self._populate_slot(ref, slot)

    def _populate_slot(self, ref: PackageRef, slot: Path) -> CacheEntry:
        archive = slot / "archive.zip"
        unpacked = slot / "pkg"
        part = slot / "archive.zip.part"
        staging = Path(tempfile.mkdtemp(prefix="pkg.", dir=slot))
        try:
            self._download_with_retries(ref.url, part)
            result = verify(part, ref.checksum_sha256)
            if not result.ok:
                raise ChecksumMismatchError(ref.checksum_sha256, result.actual, path=part)
            try:
                with zipfile.ZipFile(part) as zf:
                    zf.extractall(staging)
            except zipfile.BadZipFile as exc:
                raise ArchiveFormatError(f"package for {ref.model_id} is not a valid ZIP: {exc}") from exc
            if not (staging / MANIFEST_NAME).is_file():
                raise MissingManifestError(f"package for {ref.model_id} lacks {MANIFEST_NAME} at its root")

            if unpacked.exists():
                shutil.rmtree(unpacked)
            os.replace(part, archive)
            os.replace(staging, unpacked)
            entry = CacheEntry(
                model_id=ref.model_id,
                archive_path=archive,
                unpacked_dir=unpacked,
                verified_at=datetime.now(timezone.utc).isoformat(),
                checksum_sha256=ref.checksum_sha256,
            )
            self._commit_marker(slot, entry)
            logger.info("cached package %s (%s)", ref.model_id, ref.checksum_sha256[:8])
            return entry
        finally:
            part.unlink(missing_ok=True)
            if staging.exists():
                shutil.rmtree(staging, ignore_errors=True)

    def _commit_marker(self, slot: Path, entry: CacheEntry) -> None:
        marker_tmp = slot / "entry.json.tmp"
        marker_tmp.write_text(
            json.dumps(
                {
                    "model_id": entry.model_id,
                    "checksum_sha256": entry.checksum_sha256,
                    "verified_at": entry.verified_at,
                }
            ),
            encoding="utf-8",
        )
        os.replace(marker_tmp, self._entry_path(slot))

    def _download_with_retries(self, url: str, dest: Path) -> None:
        last: NetworkError | None = None
        for attempt in range(RETRY_ATTEMPTS):
            try:
                self.transport.fetch(url, dest)
                return
            except NetworkError as exc:
                last = exc
                dest.unlink(missing_ok=True)
                if attempt < RETRY_ATTEMPTS - 1:
                    delay = RETRY_BACKOFF_S[attempt]
                    logger.warning("download attempt %d failed (%s); retrying in %.0fs", attempt + 1, exc, delay)
                    self._sleep(delay)
        assert last is not None
        raise last

    def purge(self, model_id: str) -> bool:
        """Remove every cached slot for a model. Idempotent."""
        target = self.cache_root / model_id
        if not target.exists():
            return False
        shutil.rmtree(target)
        return True


def with_retries(operation, *, sleep=time.sleep, retryable=(NetworkError,)):
    """Run ``operation`` with the store's retry policy (3 attempts, 1s/2s/4s)."""
    last: Exception | None = None
    for attempt in range(RETRY_ATTEMPTS):
        try:
            return operation()
        except retryable as exc:
            last = exc
            if attempt < RETRY_ATTEMPTS - 1:
                sleep(RETRY_BACKOFF_S[attempt])
    assert last is not None
    raise last
