"""Fréchet-distance evaluation engine.

Feature sets are fitted to multivariate Gaussians and compared via the
Wasserstein-2 (Fréchet) distance

    FD(X, Y) = ||mu_X - mu_Y||^2 + tr(Sigma_X + Sigma_Y - 2 (Sigma_X Sigma_Y)^(1/2)).

The cross-term is computed through the symmetrized product
S_Y^(1/2) Sigma_X S_Y^(1/2), whose trace of the matrix square root equals
tr((Sigma_X Sigma_Y)^(1/2)) but keeps every factor symmetric PSD, so an
eigendecomposition with eigenvalues clamped at zero is numerically safe.

A report pairs the model distance FID_rs (real vs synthetic) with the
lower bound FID_rr (two disjoint halves of the real set, seeded split) and
the ratio r = 1 - (FID_rs - FID_rr) / FID_rs, which normalizes the model
distance by the variation intrinsic to the real data. r lies in [0, 1]
when FID_rs >= FID_rr; the report flags out-of-order inputs instead of
hiding them.

Covariance uses the unbiased N-1 denominator; public implementations
differ on this, so the convention is recorded in every report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

COV_DENOMINATOR = "n-1"

_SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D matrix of extracted feature rows plus the extractor that made it."""

    rows: np.ndarray
    extractor_id: str = "unknown"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {rows.shape}")
        if rows.shape[0] < 2:
            raise ValidationError("feature matrix needs at least 2 rows")
        if not np.isfinite(rows).all():
            raise ValidationError("feature matrix contains non-finite values")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class FidRatioResult:
    value: float
    in_bounds: bool


@dataclass(frozen=True)
class FidReport:
    fid_rr: float
    fid_rs: float
    r_fid: float
    in_bounds: bool
    extractor_id: str
    normalization_mode: str
    n_real: int
    n_syn: int
    split_seed: int
    cov_denominator: str = COV_DENOMINATOR

    def to_dict(self) -> dict:
        return {
            "n_real": self.n_real,
            "n_syn": self.n_syn,
            "fid_rr": self.fid_rr,
            "fid_rs": self.fid_rs,
            "r_fid": self.r_fid,
            "in_bounds": self.in_bounds,
            "extractor_id": self.extractor_id,
            "normalization_mode": self.normalization_mode,
            "split_seed": self.split_seed,
            "cov_denominator": self.cov_denominator,
        }


def fit_gaussian(features: FeatureMatrix) -> GaussianStats:
    """Column mean and unbiased covariance, symmetrized as (C + C^T)/2."""
    rows = features.rows
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (features.n - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, cov=cov, n=features.n)


def spd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix via eigendecomposition.

    Round-off can push small eigenvalues negative; they are clamped at 0.
    """
    sym = (matrix + matrix.T) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(sym)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def frechet_distance(x: GaussianStats, y: GaussianStats) -> float:
    """Wasserstein-2 distance between two Gaussians; small negative
    round-off results are clamped to 0."""
    if x.dim != y.dim:
        raise ValidationError(f"dimension mismatch: {x.dim} != {y.dim}")
    for stats in (x, y):
        if not (np.isfinite(stats.mean).all() and np.isfinite(stats.cov).all()):
            raise ValidationError("non-finite Gaussian statistics")
        scale = max(float(np.abs(stats.cov).max()), 1.0)
        if float(np.abs(stats.cov - stats.cov.T).max()) > _SYMMETRY_RTOL * scale:
            raise ValidationError("covariance matrix is not symmetric")

    diff = x.mean - y.mean
    sqrt_y = spd_sqrt(y.cov)
    inner = sqrt_y @ x.cov @ sqrt_y
    cross = spd_sqrt(inner)
    value = float(diff @ diff + np.trace(x.cov) + np.trace(y.cov) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def fid_ratio(fid_rs: float, fid_rr: float) -> FidRatioResult:
    """Ratio 1 - (FID_rs - FID_rr)/FID_rs with an explicit ordering flag.

    Both distances zero means identical distributions: value 1. A zero
    model distance with a positive lower bound is contradictory input.
    """
    if fid_rs < 0 or fid_rr < 0:
        raise ValidationError("distances must be non-negative")
    if fid_rs == 0:
        if fid_rr == 0:
            return FidRatioResult(value=1.0, in_bounds=True)
        raise ValidationError("fid_rs == 0 with fid_rr > 0 is inconsistent")
    value = 1.0 - (fid_rs - fid_rr) / fid_rs
    return FidRatioResult(value=value, in_bounds=fid_rr <= fid_rs)


def split_real_features(features: FeatureMatrix, split_seed: int) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Disjoint 50/50 split via a seeded shuffle (disjointness avoids the
    optimistic bias of overlapping draws)."""
    if features.n < 4:
        raise ValidationError("need at least 4 real rows to split")
    rng = np.random.default_rng(split_seed)
    order = rng.permutation(features.n)
    half = features.n // 2
    first = FeatureMatrix(features.rows[order[:half]], extractor_id=features.extractor_id)
    second = FeatureMatrix(features.rows[order[half:]], extractor_id=features.extractor_id)
    return first, second


def compute_fid_report(
    real: FeatureMatrix,
    syn: FeatureMatrix,
    split_seed: int = 0,
    *,
    normalization_mode: str = "none",
) -> FidReport:
    """FID_rr over a seeded disjoint real split, FID_rs over real vs syn,
    and the ratio, with full provenance."""
    if real.extractor_id != syn.extractor_id:
        raise ValidationError(
            f"extractor mismatch: real={real.extractor_id!r} syn={syn.extractor_id!r}"
        )
    if syn.n < 2:
        raise ValidationError("need at least 2 synthetic rows")

    half_a, half_b = split_real_features(real, split_seed)
    fid_rr = frechet_distance(fit_gaussian(half_a), fit_gaussian(half_b))
    fid_rs = frechet_distance(fit_gaussian(real), fit_gaussian(syn))

    if fid_rs == 0 and fid_rr > 0:
        # identical real/syn sets: the ratio diverges; flag instead of failing
        ratio = FidRatioResult(value=math.inf, in_bounds=False)
    else:
        ratio = fid_ratio(fid_rs, fid_rr)

    return FidReport(
        fid_rr=fid_rr,
        fid_rs=fid_rs,
        r_fid=ratio.value,
        in_bounds=ratio.in_bounds,
        extractor_id=real.extractor_id,
        normalization_mode=normalization_mode,
        n_real=real.n,
        n_syn=syn.n,
        split_seed=split_seed,
    )


def format_report_rows(reports: list[tuple[str, FidReport]]) -> str:
    """Fixed-width text table: #imgs, real-real, real-syn, r_FID per row."""
    header = f"{'model':<24} {'#imgs':>6} {'real-real':>10} {'real-syn':>10} {'r_FID':>7}"
    lines = [header, "-" * len(header)]
    for label, report in reports:
        flag = "" if report.in_bounds else " *"
        lines.append(
            f"{label:<24} {report.n_real:>6} {report.fid_rr:>10.2f} {report.fid_rs:>10.2f} "
            f"{report.r_fid:>7.3f}{flag}"
        )
    if any(not report.in_bounds for _, report in reports):
        lines.append("* ratio outside [0,1]: FID_rr exceeds FID_rs")
    return "\n".join(lines)
