"""Single point of access to the hub: registry loading, search, ranking,
lazy per-model executors, generation, and contribution.

The registry source comes from the constructor, ``GENHUB_REGISTRY``, or
the default ``./registry/index.json``; it may be a local path or an HTTP
URL. Executor handles are created lazily, one per model id, on the first
generation request and reused afterwards.
"""

from __future__ import annotations

import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

from .contribute import ContributionInput, ContributionResult, PipelineReport, contribute, test_all
from .executor import (
    ExecutorHandle,
    GenerateRequest,
    GenerateResult,
    SampleRecord,
    TestReport,
    run_test_pipeline,
    sample_batches,
)
from .registry import ModelMetadata, RegistryIndex, get_metadata, load_index
from .search import (
    ASCENDING,
    MatchCandidates,
    RankedList,
    SearchQuery,
    find_models,
    find_rank,
    rank_models,
)
from .store import HttpTransport, PackageStore

logger = logging.getLogger(__name__)

REGISTRY_ENV = "GENHUB_REGISTRY"
DEFAULT_REGISTRY = "./registry/index.json"


def _read_registry_document(source: str, transport) -> bytes:
    if source.startswith(("http://", "https://", "file://")):
        with tempfile.NamedTemporaryFile(prefix="genhub_registry_", suffix=".json") as tmp:
            transport.fetch(source, Path(tmp.name))
            return Path(tmp.name).read_bytes()
    return Path(source).read_bytes()


class Hub:
    """Facade over the hub's modules; safe for concurrent readers."""

    def __init__(
        self,
        registry_source: str | Path | None = None,
        *,
        cache_root: str | Path | None = None,
        transport=None,
        chunk_size: int | None = None,
        deps_resolver: Callable[[Sequence[str]], list[str]] | None = None,
        install_dependencies: bool = False,
        installer: Callable[[Sequence[str]], None] | None = None,
    ):
        self.registry_source = str(
            registry_source or os.environ.get(REGISTRY_ENV) or DEFAULT_REGISTRY
        )
        self.transport = transport or HttpTransport()
        self.store = PackageStore(cache_root=cache_root, transport=self.transport)
        self.chunk_size = chunk_size
        self.deps_resolver = deps_resolver
        self.install_dependencies = install_dependencies
        self.installer = installer

        self._index: RegistryIndex | None = None
        self._index_lock = threading.Lock()
        self._handles: dict[str, ExecutorHandle] = {}
        self._handles_lock = threading.Lock()

    # ---------------------------------------------------------------- registry

    @property
    def index(self) -> RegistryIndex:
        if self._index is None:
            with self._index_lock:
                if self._index is None:
                    self._index = load_index(_read_registry_document(self.registry_source, self.transport))
                    logger.info("loaded registry with %d models from %s", len(self._index), self.registry_source)
        return self._index

    def reload(self) -> RegistryIndex:
        with self._index_lock:
            self._index = None
        return self.index

    def model_ids(self) -> list[str]:
        return self.index.ids()

    def get_metadata(self, model_id: str) -> ModelMetadata:
        return get_metadata(self.index, model_id)

    # ------------------------------------------------------------------ search

    def find_models(self, values: Sequence[str], operator: str = "OR") -> MatchCandidates:
        return find_models(self.index, SearchQuery.create(values, operator))

    def rank_models(
        self, metric_path: str, order: str = ASCENDING, ids: Sequence[str] | None = None
    ) -> RankedList:
        return rank_models(self.index, metric_path, order, ids)

    def find_rank(
        self, values: Sequence[str], metric_path: str, order: str = ASCENDING, operator: str = "OR"
    ) -> RankedList:
        return find_rank(self.index, SearchQuery.create(values, operator), metric_path, order)

    # --------------------------------------------------------------- execution

    def init_executor(self, model_id: str) -> ExecutorHandle:
        """First call resolves the package and parses the manifest; later
        calls return the same handle."""
        with self._handles_lock:
            handle = self._handles.get(model_id)
            if handle is not None:
                return handle
        meta = self.get_metadata(model_id)
        handle = ExecutorHandle.initialize(
            meta,
            self.store,
            deps_resolver=self.deps_resolver,
            install_dependencies=self.install_dependencies,
            installer=self.installer,
        )
        with self._handles_lock:
            return self._handles.setdefault(model_id, handle)

    def generate(
        self,
        model_id: str,
        num_samples: int = 1,
        output_path: str | Path | None = None,
        save_images: bool = True,
        seed: int | None = None,
        chunk_size: int | None = None,
        **kwargs: Any,
    ) -> GenerateResult:
        handle = self.init_executor(model_id)
        request = GenerateRequest(
            model_id=model_id,
            num_samples=num_samples,
            output_path=Path(output_path) if output_path else None,
            save_images=save_images,
            seed=seed,
            kwargs=kwargs,
            chunk_size=chunk_size or self.chunk_size,
        )
        return handle.generate(request)

    def get_generate_callable(self, model_id: str) -> "GenerateCallable":
        """Invoker with manifest defaults pre-bound; every call generates."""
        handle = self.init_executor(model_id)
        return GenerateCallable(self, model_id, handle)

    def sample_iterator(
        self, model_id: str, batch_size: int, total: int | None = None, seed: int | None = None
    ) -> Iterator[list[SampleRecord]]:
        """Pull-based batch stream; at most one batch in memory."""
        self.init_executor(model_id)

        def generate(**kw):
            return self.generate(model_id, **kw)

        return sample_batches(generate, batch_size, total, seed)

    # -------------------------------------------------------------- diagnostics

    def test_model(self, model_id: str) -> TestReport:
        meta = self.get_metadata(model_id)
        return run_test_pipeline(meta, self.store, deps_resolver=self.deps_resolver)

    def test_all(self, parallelism: int = 4) -> PipelineReport:
        return test_all(self.index, self.store, parallelism=parallelism)

    # ------------------------------------------------------------- contribution

    def contribute(self, inp: ContributionInput, storage_client, tracker_client, **kw) -> ContributionResult:
        return contribute(inp, storage_client, tracker_client, index=self.index, **kw)


class GenerateCallable:
    """Parameterized invoker around one model's generate routine."""

    def __init__(self, hub: Hub, model_id: str, handle: ExecutorHandle):
        self._hub = hub
        self.model_id = model_id
        self.manifest = handle.manifest

    def __call__(
        self,
        num_samples: int = 1,
        output_path: str | Path | None = None,
        save_images: bool = True,
        seed: int | None = None,
        **kwargs: Any,
    ) -> GenerateResult:
        return self._hub.generate(
            self.model_id,
            num_samples=num_samples,
            output_path=output_path,
            save_images=save_images,
            seed=seed,
            **kwargs,
        )
