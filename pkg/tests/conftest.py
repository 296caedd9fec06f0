from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from genhub.hub import Hub
from genhub.registry import (
    DescriptionSection,
    ExecutionSection,
    ModelMetadata,
    RegistryIndex,
    SelectionSection,
)
from genhub.testing import make_fixture_registry

DUMMY_CHECKSUM = "0" * 64


def make_entry(
    model_id: str = "00001_A",
    *,
    keywords=("mammography", "patches"),
    metrics=None,
    title="Breast mass patch generator",
    modality="mammography",
    organ="breast",
    url="https://example.invalid/pkg.zip",
    checksum=DUMMY_CHECKSUM,
    training_dataset="fixture dataset",
) -> ModelMetadata:
    return ModelMetadata(
        model_id=model_id,
        execution=ExecutionSection(
            package_url=url,
            checksum_sha256=checksum,
            package_size_bytes=123,
            image_size=(128, 128),
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
            training_dataset=training_dataset,
            license="MIT",
            date="2024-01-31",
            publication="",
        ),
    )


def make_index(*entries: ModelMetadata) -> RegistryIndex:
    return RegistryIndex(models={e.model_id: e for e in entries})


class CountingTransport:
    """Wraps a transport and counts fetches; can serve corrupted bytes."""

    def __init__(self, inner, corrupt: bool = False):
        self.inner = inner
        self.calls = 0
        self.corrupt = corrupt

    def fetch(self, url: str, dest: Path) -> None:
        self.calls += 1
        self.inner.fetch(url, dest)
        if self.corrupt:
            data = bytearray(dest.read_bytes())
            data[len(data) // 2] ^= 0xFF
            dest.write_bytes(bytes(data))


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("fixtures")
    make_fixture_registry(root)
    return root


@pytest.fixture(scope="session")
def fixture_index_path(fixture_root) -> Path:
    return fixture_root / "registry" / "index.json"


@pytest.fixture(scope="session")
def shared_cache(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("cache")


@pytest.fixture()
def hub(fixture_index_path, shared_cache) -> Hub:
    return Hub(fixture_index_path, cache_root=shared_cache)


@pytest.fixture()
def fresh_fixtures(tmp_path):
    """Per-test fixture registry for tests that mutate or corrupt caches."""
    index_path, index = make_fixture_registry(tmp_path / "fx")
    return index_path, index, tmp_path


def copy_fixture_archive(fixture_root: Path, model_id: str, dest: Path) -> Path:
    src = fixture_root / "archives" / f"{model_id}.zip"
    dest.parent.mkdir(parents=True, exist_ok=True)
    shutil.copy2(src, dest)
    return dest
