"""Independent oracle implementations shared by unit and acceptance tests.

These deliberately avoid the library's own code paths: search is brute
force set evaluation, ranking is a stable sort, and the Fréchet distance
oracle goes through scipy.linalg.sqrtm rather than the eigendecomposition
route the package uses.
"""

from __future__ import annotations

import hashlib
import random

import numpy as np
from scipy import linalg as scipy_linalg

from genhub.registry import RegistryIndex
from genhub.search import recursive_match

from conftest import make_entry, make_index

VOCAB = ["mammo", "patch", "endo", "xray", "mask", "full", "grid", "knee"]

TABLE_METRIC = "FID.ImageNet.real-syn"


def random_registry(rng: random.Random, max_models: int = 20) -> RegistryIndex:
    entries = []
    for i in range(rng.randint(1, max_models)):
        keywords = tuple(rng.sample(VOCAB, rng.randint(1, 4)))
        metrics = {}
        if rng.random() < 0.8:
            metrics = {"FID": {"ImageNet": {"real-syn": round(rng.uniform(10, 250), 2)}}}
        entries.append(
            make_entry(
                f"{i:05d}_M{i}",
                keywords=keywords,
                metrics=metrics,
                title=rng.choice(VOCAB) + " generator",
            )
        )
    return make_index(*entries)


def brute_force_ids(index: RegistryIndex, values: list[str], operator: str) -> list[str]:
    out = []
    for model_id in index.ids():
        hits = {v for v in values if recursive_match(v, index.models[model_id])}
        keep = (
            (operator == "AND" and hits == set(values))
            or (operator == "OR" and bool(hits))
            or (operator == "XOR" and len(hits) == 1)
        )
        if keep:
            out.append(model_id)
    return out


def stable_sort_oracle(index: RegistryIndex, metric_path: str, order: str):
    carriers = []
    for model_id in index.ids():
        node = index.models[model_id].selection.metrics
        for part in metric_path.split("."):
            node = node.get(part) if isinstance(node, dict) else None
            if node is None:
                break
        if isinstance(node, (int, float)) and not isinstance(node, bool):
            carriers.append((model_id, float(node)))
    carriers.sort(key=lambda item: item[0])
    carriers.sort(key=lambda item: item[1], reverse=(order == "descending"))
    return carriers


def scipy_frechet(x_stats, y_stats) -> float:
    covmean = scipy_linalg.sqrtm(x_stats.cov @ y_stats.cov)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = x_stats.mean - y_stats.mean
    return float(diff @ diff + np.trace(x_stats.cov) + np.trace(y_stats.cov) - 2 * np.trace(covmean))


def record_digest(record) -> tuple:
    """Chunking-independent identity of a generated sample: global index plus
    each output's name and content hash."""
    return (
        record.index,
        tuple(
            sorted(
                (kind, path.name, hashlib.sha256(path.read_bytes()).hexdigest())
                for kind, path in record.files.items()
            )
        ),
    )
