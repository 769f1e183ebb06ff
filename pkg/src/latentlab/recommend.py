"""Cross-category recommendation by cluster-center arithmetic.

The query vector is translated by (target center - source center) and the
nearest database item inside the target cluster is retrieved. The
recommendation is always an existing item, never a decoded image.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .clustering import assign_cluster
from .errors import StateError, ValidationError
from .retrieval import METHODS, RetrievalQuery, retrieve_top_k


@dataclass
class TargetRecommendation:
    """Result for one target cluster: the translation and the matched items."""

    cluster: int
    diff: np.ndarray
    translated: np.ndarray
    matches: list  # (item_id, score, tag) best-first, at most `count` long


@dataclass
class Recommendation:
    source_cluster: int
    method: str
    targets: list


def center_diff(model, i, j):
    """Translation vector from cluster i's center to cluster j's center."""
    if i == j:
        raise ValidationError(f"source and target clusters are both {i}")
    k = model.k
    for name, value in (("i", i), ("j", j)):
        if not (0 <= value < k):
            raise ValidationError(f"cluster {name}={value} outside [0, {k})")
    return model.centers[j] - model.centers[i]


def recommend_cross(z_bar, codebook, cluster_model, method="fixed_epsilon", count=1):
    """One recommendation per non-source cluster, via translated retrieval."""
    if method not in METHODS:
        raise ValidationError(
            f"unknown method {method!r}, expected one of {METHODS}"
        )
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if not codebook.is_clustered:
        raise StateError("recommendation requires a clustered codebook")
    z = np.asarray(z_bar, dtype=float)
    source = assign_cluster(z, cluster_model)
    targets = []
    for j in range(cluster_model.k):
        if j == source:
            continue
        if not (codebook.cluster_ids == j).any():
            warnings.warn(f"cluster {j} has no members; skipping")
            continue
        diff = center_diff(cluster_model, source, j)
        translated = z + diff
        result = retrieve_top_k(
            RetrievalQuery(translated, method=method, k=count, cluster=j),
            codebook,
        )
        targets.append(
            TargetRecommendation(
                cluster=j,
                diff=diff,
                translated=translated,
                matches=result.items,
            )
        )
    return Recommendation(source_cluster=source, method=method, targets=targets)
