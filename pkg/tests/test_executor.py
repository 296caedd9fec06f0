from __future__ import annotations

import dataclasses
import zipfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genhub.contribute import package_model
from genhub.errors import (
    DependencyError,
    ManifestInvalidError,
    ModelProcessError,
    ProtocolViolationError,
    ValidationError,
)
from genhub.executor import plan_chunks
from genhub.hub import Hub
from genhub.registry import serialize_index
from genhub.store import sha256_file
from genhub.testing import toy_metadata, write_toy_package

from conftest import make_index
from oracles import record_digest


# -------------------------------------------------------------- plan_chunks


@pytest.mark.parametrize(
    "n,c,expected",
    [(100, 32, [32, 32, 32, 4]), (5, 32, [5]), (64, 32, [32, 32]), (1, 1, [1])],
)
def test_plan_chunks_examples(n, c, expected):
    assert plan_chunks(n, c) == expected


@given(st.integers(1, 10**6), st.integers(1, 10**6))
@settings(max_examples=200, deadline=None)
def test_plan_chunks_property(n, c):
    chunks = plan_chunks(n, c)
    assert sum(chunks) == n
    assert max(chunks) <= c
    assert all(size == c for size in chunks[:-1])


def test_plan_chunks_rejects_nonpositive():
    with pytest.raises(ValidationError):
        plan_chunks(0, 4)
    with pytest.raises(ValidationError):
        plan_chunks(4, 0)


# ----------------------------------------------------------- fixture helpers


def hub_with_model(tmp_path, *, options=None, dependencies=(), drop_manifest=False) -> tuple[Hub, str]:
    """One-model registry built fresh under tmp_path."""
    model_id = "00042_UNIT"
    package_dir = write_toy_package(tmp_path / "pkg" / model_id, model_id, **(options or {}))
    if drop_manifest:
        (package_dir / "model.manifest").unlink()
        archive_path = tmp_path / f"{model_id}.zip"
        with zipfile.ZipFile(archive_path, "w") as zf:
            for p in sorted(package_dir.rglob("*")):
                if p.is_file():
                    zf.write(p, p.relative_to(package_dir).as_posix())
        checksum, size = sha256_file(archive_path), archive_path.stat().st_size
    else:
        archive = package_model(package_dir, tmp_path / f"{model_id}.zip")
        archive_path, checksum, size = archive.path, archive.checksum_sha256, archive.size_bytes
    meta = toy_metadata(
        model_id,
        archive_path.resolve().as_uri(),
        checksum,
        size,
        keywords=("unit", "fixture"),
    )
    if dependencies:
        meta = dataclasses.replace(
            meta, execution=dataclasses.replace(meta.execution, dependencies=tuple(dependencies))
        )
    index_path = tmp_path / "index.json"
    index_path.write_bytes(serialize_index(make_index(meta)))
    return Hub(index_path, cache_root=tmp_path / "cache"), model_id


# ------------------------------------------------------------ init_executor


def test_init_is_lazy_singleton(hub):
    first = hub.init_executor("00001_TOY_PATCH")
    second = hub.init_executor("00001_TOY_PATCH")
    assert first is second
    assert first.cache_entry == second.cache_entry


def test_missing_manifest_package(tmp_path):
    hub, model_id = hub_with_model(tmp_path, drop_manifest=True)
    with pytest.raises(Exception) as excinfo:
        hub.init_executor(model_id)
    assert "model.manifest" in str(excinfo.value)


def test_unsatisfied_dependency_named(tmp_path):
    hub, model_id = hub_with_model(tmp_path, dependencies=("nonexistent-tool>=9",))
    with pytest.raises(DependencyError) as excinfo:
        hub.init_executor(model_id)
    assert "nonexistent-tool>=9" in str(excinfo.value)


def test_dependency_auto_install(tmp_path):
    installed = []

    def resolver(deps):
        return [d for d in deps if d not in installed]

    def installer(deps):
        installed.extend(deps)

    model_id = "00042_UNIT"
    package_dir = write_toy_package(tmp_path / "pkg" / model_id, model_id)
    archive = package_model(package_dir, tmp_path / f"{model_id}.zip")
    meta = toy_metadata(model_id, archive.path.resolve().as_uri(), archive.checksum_sha256,
                        archive.size_bytes, keywords=("unit",))
    meta = dataclasses.replace(
        meta, execution=dataclasses.replace(meta.execution, dependencies=("sometool>=1",))
    )
    index_path = tmp_path / "index.json"
    index_path.write_bytes(serialize_index(make_index(meta)))
    hub = Hub(
        index_path,
        cache_root=tmp_path / "cache",
        deps_resolver=resolver,
        install_dependencies=True,
        installer=installer,
    )
    handle = hub.init_executor(model_id)
    assert handle.state == "ready"
    assert installed == ["sometool>=1"]


# ----------------------------------------------------------------- generate


def test_generate_100_files_named_by_global_index(hub, tmp_path):
    result = hub.generate("00001_TOY_PATCH", num_samples=100, seed=7, output_path=tmp_path / "out")
    assert len(result.records) == 100
    names = sorted(p.name for r in result.records for p in r.files.values())
    assert names[0] == "sample_00000.png"
    assert names[-1] == "sample_00099.png"
    assert len(names) == 100


def test_generate_seeded_repeat_identical(hub, tmp_path):
    a = hub.generate("00001_TOY_PATCH", num_samples=10, seed=7, output_path=tmp_path / "a")
    b = hub.generate("00001_TOY_PATCH", num_samples=10, seed=7, output_path=tmp_path / "b")
    assert [record_digest(r) for r in a.records] == [record_digest(r) for r in b.records]


def test_generate_image_and_mask_records(hub, tmp_path):
    result = hub.generate("00003_TOY_POLYP", num_samples=3, seed=0, output_path=tmp_path / "pm")
    assert len(result.records) == 3
    for record in result.records:
        assert set(record.files) == {"image", "mask"}
        for path in record.files.values():
            assert path.is_file()


def test_chunking_semantically_invisible(hub, tmp_path):
    small = hub.generate("00001_TOY_PATCH", num_samples=70, seed=3, output_path=tmp_path / "s", chunk_size=32)
    large = hub.generate("00001_TOY_PATCH", num_samples=70, seed=3, output_path=tmp_path / "l", chunk_size=128)
    assert [record_digest(r) for r in small.records] == [record_digest(r) for r in large.records]


def test_payload_mode_removes_files(hub):
    result = hub.generate("00001_TOY_PATCH", num_samples=2, seed=1, save_images=False)
    assert result.output_path is None
    for record in result.records:
        assert record.files is None
        assert set(record.payloads) == {"image"}
        assert record.payloads["image"].startswith(b"\x89PNG")


def test_unknown_kwarg_rejected(hub):
    with pytest.raises(ValidationError):
        hub.generate("00001_TOY_PATCH", num_samples=1, nonsense_param=3)


def test_mistyped_kwarg_rejected(hub):
    with pytest.raises(ValidationError):
        hub.generate("00001_TOY_PATCH", num_samples=1, brightness="very")


def test_latent_vector_length_checked(hub):
    with pytest.raises(ValidationError) as excinfo:
        hub.generate("00002_TOY_FULL", num_samples=1, save_images=False, input_latent_vector=[0.0] * 3)
    assert "latent" in str(excinfo.value).lower()


def test_latent_full_length_sliced_per_chunk(hub):
    # 100 dims per sample, 3 samples, full-length vector: per-sample slices
    vectors = [[float(i)] * 100 for i in range(3)]
    flat = [x for vec in vectors for x in vec]
    result = hub.generate(
        "00002_TOY_FULL", num_samples=3, seed=0, save_images=False,
        chunk_size=2, input_latent_vector=flat,
    )
    single = [
        hub.generate("00002_TOY_FULL", num_samples=1, seed=0, save_images=False,
                     input_latent_vector=vec).records[0].payloads["image"]
        for vec in vectors
    ]
    assert [r.payloads["image"] for r in result.records] == single


def test_condition_validated(tmp_path):
    hub, model_id = hub_with_model(tmp_path, options={"conditional": True})
    ok = hub.generate(model_id, num_samples=1, seed=0, save_images=False, condition="malignant")
    assert len(ok.records) == 1
    with pytest.raises(ValidationError):
        hub.generate(model_id, num_samples=1, seed=0, save_images=False, condition="unheard-of")


def test_buffer_probe_bounded_by_chunk(hub):
    handle = hub.init_executor("00001_TOY_PATCH")
    peaks: list[int] = []
    handle.buffer_probe = peaks.append
    try:
        hub.generate("00001_TOY_PATCH", num_samples=10, seed=2, save_images=False, chunk_size=4)
    finally:
        handle.buffer_probe = None
    assert peaks and max(peaks) <= 4


def test_entrypoint_exit1_captures_tail(tmp_path):
    hub, model_id = hub_with_model(tmp_path, options={"fail_mode": "exit1"})
    with pytest.raises(ModelProcessError) as excinfo:
        hub.generate(model_id, num_samples=1, seed=0, output_path=tmp_path / "o")
    assert excinfo.value.exit_code == 1
    assert "injected failure" in excinfo.value.log_tail


def test_short_output_is_protocol_violation(tmp_path):
    hub, model_id = hub_with_model(tmp_path, options={"fail_mode": "short_output"})
    with pytest.raises(ProtocolViolationError):
        hub.generate(model_id, num_samples=3, seed=0, output_path=tmp_path / "o")


def test_extra_file_is_protocol_violation(tmp_path):
    hub, model_id = hub_with_model(tmp_path, options={"fail_mode": "extra_file"})
    with pytest.raises(ProtocolViolationError) as excinfo:
        hub.generate(model_id, num_samples=1, seed=0, output_path=tmp_path / "o")
    assert "stray.bin" in str(excinfo.value)


# ------------------------------------------------------------ callable, iter


def test_generate_callable_matches_generate(hub, tmp_path):
    invoker = hub.get_generate_callable("00001_TOY_PATCH")
    direct = hub.generate("00001_TOY_PATCH", num_samples=2, seed=5, output_path=tmp_path / "d")
    via = invoker(num_samples=2, seed=5, output_path=tmp_path / "v")
    assert [record_digest(r) for r in direct.records] == [record_digest(r) for r in via.records]


def test_generate_callable_independent_runs(hub):
    invoker = hub.get_generate_callable("00001_TOY_PATCH")
    assert len(invoker(num_samples=2, seed=0, save_images=False).records) == 2
    assert len(invoker(num_samples=3, seed=0, save_images=False).records) == 3


def test_generate_callable_unknown_kwarg(hub):
    invoker = hub.get_generate_callable("00001_TOY_PATCH")
    with pytest.raises(ValidationError):
        invoker(num_samples=1, save_images=False, bogus=1)


def test_sample_iterator_bounded(hub):
    batches = list(hub.sample_iterator("00001_TOY_PATCH", batch_size=8, total=20, seed=0))
    assert [len(b) for b in batches] == [8, 8, 4]


def test_sample_iterator_total_zero(hub):
    assert list(hub.sample_iterator("00001_TOY_PATCH", batch_size=8, total=0)) == []


def test_sample_iterator_unbounded_stays_open(hub):
    stream = hub.sample_iterator("00001_TOY_PATCH", batch_size=2, seed=0)
    sizes = [len(next(stream)) for _ in range(3)]
    assert sizes == [2, 2, 2]
    assert len(next(stream)) == 2  # still open


def test_sample_iterator_rejects_bad_batch(hub):
    with pytest.raises(ValidationError):
        next(hub.sample_iterator("00001_TOY_PATCH", batch_size=0, total=4))


# ----------------------------------------------------------------- test_model


def test_test_model_healthy(hub):
    report = hub.test_model("00001_TOY_PATCH")
    assert report.passed
    assert [s.name for s in report.stages] == ["resolve", "manifest", "dependency", "generate", "output-schema"]


def test_test_model_exit1_fails_generate_stage(tmp_path):
    hub, model_id = hub_with_model(tmp_path, options={"fail_mode": "exit1"})
    report = hub.test_model(model_id)
    by_name = {s.name: s.passed for s in report.stages}
    assert by_name["resolve"] and by_name["manifest"] and by_name["dependency"]
    assert by_name["generate"] is False
    assert not report.passed


def test_test_model_short_output_fails_schema_stage(tmp_path):
    hub, model_id = hub_with_model(tmp_path, options={"fail_mode": "short_output"})
    report = hub.test_model(model_id)
    by_name = {s.name: s.passed for s in report.stages}
    assert by_name["generate"] is True
    assert by_name["output-schema"] is False


def test_registry_defaults_must_be_declared(tmp_path):
    model_id = "00042_UNIT"
    package_dir = write_toy_package(tmp_path / "pkg" / model_id, model_id)
    archive = package_model(package_dir, tmp_path / f"{model_id}.zip")
    meta = toy_metadata(model_id, archive.path.resolve().as_uri(), archive.checksum_sha256,
                        archive.size_bytes, keywords=("unit",))
    meta = dataclasses.replace(
        meta, execution=dataclasses.replace(meta.execution, generate_defaults={"undeclared_param": 1})
    )
    index_path = tmp_path / "index.json"
    index_path.write_bytes(serialize_index(make_index(meta)))
    hub = Hub(index_path, cache_root=tmp_path / "cache")
    with pytest.raises(ValidationError) as excinfo:
        hub.init_executor(model_id)
    assert "undeclared_param" in str(excinfo.value)
