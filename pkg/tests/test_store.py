from __future__ import annotations

import hashlib
import os
import zipfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

from genhub.errors import (
    ArchiveFormatError,
    ChecksumMismatchError,
    MissingManifestError,
    NetworkError,
)
from genhub.store import HttpTransport, PackageRef, PackageStore, sha256_file, verify

from conftest import CountingTransport

SHA_ABC = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
SHA_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def fixture_ref(fixture_root: Path, model_id: str = "00001_TOY_PATCH") -> PackageRef:
    archive = fixture_root / "archives" / f"{model_id}.zip"
    return PackageRef(
        model_id=model_id,
        url=archive.resolve().as_uri(),
        checksum_sha256=sha256_file(archive),
        size_bytes=archive.stat().st_size,
    )


# ------------------------------------------------------------------- verify


def test_verify_known_digest(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"abc")
    assert verify(path, SHA_ABC).ok


def test_verify_mismatch_reports_actual(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"abc")
    result = verify(path, "0" * 64)
    assert not result.ok
    assert result.actual == SHA_ABC


def test_verify_empty_file(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    assert verify(path, SHA_EMPTY).ok


# ------------------------------------------------------------ ensure_present


def test_ensure_present_unpacks_manifest(fixture_root, tmp_path):
    store = PackageStore(cache_root=tmp_path / "cache")
    entry = store.ensure_present(fixture_ref(fixture_root))
    assert (entry.unpacked_dir / "model.manifest").is_file()
    assert entry.checksum_sha256 == fixture_ref(fixture_root).checksum_sha256


def test_second_call_hits_cache_with_zero_network(fixture_root, tmp_path):
    transport = CountingTransport(HttpTransport())
    store = PackageStore(cache_root=tmp_path / "cache", transport=transport)
    ref = fixture_ref(fixture_root)
    first = store.ensure_present(ref)
    assert transport.calls == 1
    second = store.ensure_present(ref)
    assert transport.calls == 1
    assert first == second


def test_flipped_byte_raises_and_persists_nothing(fixture_root, tmp_path):
    transport = CountingTransport(HttpTransport(), corrupt=True)
    store = PackageStore(cache_root=tmp_path / "cache", transport=transport)
    ref = fixture_ref(fixture_root)
    with pytest.raises(ChecksumMismatchError) as excinfo:
        store.ensure_present(ref)
    assert excinfo.value.expected == ref.checksum_sha256
    assert not (store.slot_dir(ref) / "entry.json").exists()
    # healthy transport afterwards succeeds in the same slot
    transport.corrupt = False
    entry = store.ensure_present(ref)
    assert (entry.unpacked_dir / "model.manifest").is_file()


def test_rehash_of_cached_archive_matches_ref(fixture_root, tmp_path):
    store = PackageStore(cache_root=tmp_path / "cache")
    ref = fixture_ref(fixture_root)
    entry = store.ensure_present(ref)
    assert sha256_file(entry.archive_path) == ref.checksum_sha256


def test_non_zip_payload(tmp_path):
    blob = tmp_path / "notzip.zip"
    blob.write_bytes(b"definitely not a zip archive")
    ref = PackageRef("00009_BAD", blob.resolve().as_uri(), sha256_file(blob), blob.stat().st_size)
    store = PackageStore(cache_root=tmp_path / "cache")
    with pytest.raises(ArchiveFormatError):
        store.ensure_present(ref)
    assert not (store.slot_dir(ref) / "entry.json").exists()


def test_zip_without_manifest(tmp_path):
    archive = tmp_path / "nomanifest.zip"
    with zipfile.ZipFile(archive, "w") as zf:
        zf.writestr("weights.pt", b"w")
    ref = PackageRef("00008_NOMF", archive.resolve().as_uri(), sha256_file(archive), 0)
    store = PackageStore(cache_root=tmp_path / "cache")
    with pytest.raises(MissingManifestError):
        store.ensure_present(ref)


def test_retry_backoff_then_success(fixture_root, tmp_path):
    class FlakyTransport:
        def __init__(self, failures: int):
            self.failures = failures
            self.inner = HttpTransport()
            self.calls = 0

        def fetch(self, url, dest):
            self.calls += 1
            if self.failures > 0:
                self.failures -= 1
                raise NetworkError("injected connection reset")
            self.inner.fetch(url, dest)

    sleeps: list[float] = []
    transport = FlakyTransport(failures=2)
    store = PackageStore(cache_root=tmp_path / "cache", transport=transport, sleep=sleeps.append)
    entry = store.ensure_present(fixture_ref(fixture_root))
    assert entry.unpacked_dir.is_dir()
    assert transport.calls == 3
    assert sleeps == [1.0, 2.0]


def test_retries_exhausted(fixture_root, tmp_path):
    class DeadTransport:
        def fetch(self, url, dest):
            raise NetworkError("unreachable")

    sleeps: list[float] = []
    store = PackageStore(cache_root=tmp_path / "cache", transport=DeadTransport(), sleep=sleeps.append)
    with pytest.raises(NetworkError):
        store.ensure_present(fixture_ref(fixture_root))
    assert sleeps == [1.0, 2.0]


def test_crash_between_download_and_rename(fixture_root, tmp_path, monkeypatch):
    store = PackageStore(cache_root=tmp_path / "cache")
    ref = fixture_ref(fixture_root)

    real_replace = os.replace
    state = {"crashed": False}

    def crashing_replace(src, dst):
        if not state["crashed"]:
            state["crashed"] = True
            raise OSError("injected crash before rename")
        return real_replace(src, dst)

    monkeypatch.setattr("genhub.store.os.replace", crashing_replace)
    with pytest.raises(OSError):
        store.ensure_present(ref)
    slot = store.slot_dir(ref)
    assert not (slot / "entry.json").exists()
    assert not (slot / "archive.zip").exists()

    monkeypatch.setattr("genhub.store.os.replace", real_replace)
    entry = store.ensure_present(ref)
    assert (entry.unpacked_dir / "model.manifest").is_file()


def test_concurrent_ensure_present_single_download(fixture_root, tmp_path):
    transport = CountingTransport(HttpTransport())
    store = PackageStore(cache_root=tmp_path / "cache", transport=transport)
    ref = fixture_ref(fixture_root)
    with ThreadPoolExecutor(max_workers=4) as pool:
        entries = list(pool.map(lambda _: store.ensure_present(ref), range(4)))
    assert transport.calls == 1
    assert all(entry == entries[0] for entry in entries)


# -------------------------------------------------------------------- purge


def test_purge_lifecycle(fixture_root, tmp_path):
    store = PackageStore(cache_root=tmp_path / "cache")
    ref = fixture_ref(fixture_root)
    store.ensure_present(ref)
    assert store.purge(ref.model_id) is True
    assert store.purge(ref.model_id) is False
    assert store.purge("99999_NEVER") is False


def test_checksum_bump_gets_fresh_slot(fixture_root, tmp_path):
    store = PackageStore(cache_root=tmp_path / "cache")
    ref = fixture_ref(fixture_root)
    other = PackageRef(ref.model_id, ref.url, hashlib.sha256(b"other").hexdigest(), 0)
    assert store.slot_dir(ref) != store.slot_dir(other)
