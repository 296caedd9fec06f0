"""Exception hierarchy. Every error carries a stable ``code`` so the HTTP
facade can map module failures onto its published error enum."""

from __future__ import annotations

from typing import Any


class GenHubError(Exception):
    """Base class for all hub failures."""

    code = "internal"

    def __init__(self, message: str, *, detail: Any = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class UnknownModelError(GenHubError):
    code = "unknown_model"

    def __init__(self, model_id: str):
        super().__init__(f"unknown model: {model_id!r}", detail={"model_id": model_id})
        self.model_id = model_id


class BadQueryError(GenHubError):
    code = "bad_query"


class UnknownOperatorError(BadQueryError):
    def __init__(self, operator: str):
        super().__init__(f"unknown search operator: {operator!r}")


class EmptyMatchError(BadQueryError):
    def __init__(self, values):
        super().__init__(f"no model matches query values {list(values)!r}")


class MetricNotFoundError(BadQueryError):
    def __init__(self, metric_path: str):
        super().__init__(f"no model carries metric {metric_path!r}")


class RegistrySchemaError(GenHubError):
    """Malformed or invariant-violating registry document."""

    code = "validation"


class DuplicateModelIdError(RegistrySchemaError):
    def __init__(self, model_id: str):
        super().__init__(f"duplicate model id: {model_id!r}", detail={"model_id": model_id})


class ValidationError(GenHubError):
    """Entry, manifest, or request failed validation; ``detail`` holds findings."""

    code = "validation"


class ChecksumMismatchError(GenHubError):
    code = "checksum_mismatch"

    def __init__(self, expected: str, actual: str, path=None):
        super().__init__(
            f"checksum mismatch: expected {expected}, got {actual}",
            detail={"expected": expected, "actual": actual, "path": str(path) if path else None},
        )
        self.expected = expected
        self.actual = actual


class NetworkError(GenHubError):
    """Transport failure after all retry attempts."""

    code = "internal"


class ArchiveFormatError(GenHubError):
    code = "validation"


class MissingManifestError(GenHubError):
    code = "validation"


class ManifestInvalidError(GenHubError):
    code = "validation"


class DependencyError(GenHubError):
    """Manifest-declared dependencies could not be resolved."""

    code = "validation"

    def __init__(self, missing: list[str]):
        super().__init__(f"unsatisfied dependencies: {', '.join(missing)}", detail={"missing": missing})
        self.missing = missing


class ProtocolViolationError(GenHubError):
    """Package response deviates from the wire protocol."""

    code = "protocol_violation"


class ModelProcessError(GenHubError):
    """Package entrypoint exited nonzero; carries the captured stderr tail."""

    code = "internal"

    def __init__(self, message: str, *, exit_code: int, log_tail: str = ""):
        super().__init__(message, detail={"exit_code": exit_code, "log_tail": log_tail})
        self.exit_code = exit_code
        self.log_tail = log_tail


class GenerateTimeoutError(GenHubError):
    code = "timeout"


class AuthError(GenHubError):
    """Storage or tracker rejected the access token."""

    code = "internal"


class QuotaError(GenHubError):
    """Storage rejected the upload for size/quota reasons."""

    code = "internal"
