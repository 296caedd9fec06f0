"""genhub: share, discover, and execute pretrained generative-model packages."""

from .contribute import ContributionInput, HttpStorageClient, HttpTrackerClient
from .errors import GenHubError
from .executor import GenerateRequest, GenerateResult, plan_chunks
from .hub import Hub
from .metrics import (
    FeatureMatrix,
    FidReport,
    compute_fid_report,
    fid_ratio,
    fit_gaussian,
    frechet_distance,
)
from .registry import (
    ModelMetadata,
    RegistryIndex,
    get_metadata,
    load_index,
    serialize_index,
    upsert_entry,
    validate_entry,
)
from .search import SearchQuery, find_models, find_rank, rank_models

__version__ = "0.1.0"

__all__ = [
    "ContributionInput",
    "FeatureMatrix",
    "FidReport",
    "GenHubError",
    "GenerateRequest",
    "GenerateResult",
    "HttpStorageClient",
    "HttpTrackerClient",
    "Hub",
    "ModelMetadata",
    "RegistryIndex",
    "SearchQuery",
    "__version__",
    "compute_fid_report",
    "fid_ratio",
    "find_models",
    "find_rank",
    "fit_gaussian",
    "frechet_distance",
    "get_metadata",
    "load_index",
    "plan_chunks",
    "rank_models",
    "serialize_index",
    "upsert_entry",
    "validate_entry",
]
