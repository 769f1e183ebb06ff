"""Similar-image retrieval over the codebook plus the mAP evaluation harness.

Two scoring schemes: log-likelihood of the query under each item's posterior
N(mu, sigma^2), and plain Euclidean distance to each item's fixed-epsilon z.
Ranking is an exact linear scan; ties break toward the lower item id.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .clustering import assign_cluster
from .errors import ShapeError, StateError, ValidationError
from .synthdata import CATEGORIES

METHODS = ("log_likelihood", "fixed_epsilon")

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class RetrievalQuery:
    """A z-bar vector plus method, scope, and ranking parameters.

    cluster=None scans the full codebook; an integer restricts the scan to
    entries annotated with that cluster id.
    """

    z_bar: np.ndarray
    method: str = "fixed_epsilon"
    k: int = 10
    cluster: int | None = None
    exclude_ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.z_bar = np.asarray(self.z_bar, dtype=float)
        if self.method not in METHODS:
            raise ValidationError(
                f"unknown method {self.method!r}, expected one of {METHODS}"
            )
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")


@dataclass
class RankedResult:
    """Best-first (item_id, score, tag) triples; scores are likelihoods
    (descending) or distances (ascending) depending on the method."""

    items: list
    method: str
    cluster: int | None

    def ids(self):
        return [item_id for item_id, _, _ in self.items]

    def tags(self):
        return [tag for _, _, tag in self.items]


def loglik_score(z_bar, mu, sigma):
    """log q(z_bar) under N(mu, diag(sigma^2)), summed over dimensions."""
    z = np.asarray(z_bar, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not (z.shape == mu.shape == sigma.shape):
        raise ShapeError(
            f"z/mu/sigma shapes differ: {z.shape}, {mu.shape}, {sigma.shape}"
        )
    if sigma.size and sigma.min() <= 0:
        raise ValidationError(f"sigma must be positive, got min {sigma.min()}")
    return float(
        np.sum(-((z - mu) ** 2) / (2.0 * sigma**2) - _HALF_LOG_2PI - np.log(sigma))
    )


def loglik_scores(z_bar, mu, sigma):
    """Vectorized loglik_score against (n, d_z) arrays; returns (n,) scores."""
    z = np.asarray(z_bar, dtype=float)
    return np.sum(
        -((z[None, :] - mu) ** 2) / (2.0 * sigma**2) - _HALF_LOG_2PI - np.log(sigma),
        axis=1,
    )


def fixed_eps_distance(z_bar, z_fixed):
    """Euclidean distance between the query and one fixed-epsilon encoding."""
    a = np.asarray(z_bar, dtype=float)
    b = np.asarray(z_fixed, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def fixed_eps_distances(z_bar, z_fixed):
    """Vectorized distances against (n, d_z) encodings; returns (n,)."""
    z = np.asarray(z_bar, dtype=float)
    return np.sqrt(((z[None, :] - z_fixed) ** 2).sum(axis=1))


def retrieve_top_k(query, codebook):
    """Exact best-first scan of the scoped codebook entries.

    Ordering key: descending log-likelihood or ascending distance, ties by
    lower item id. An empty scope yields an empty result; asking for a
    cluster scope on an unclustered codebook is a state error.
    """
    if query.z_bar.shape != (codebook.d_z,):
        raise ShapeError(
            f"query z of shape {query.z_bar.shape}, codebook d_z={codebook.d_z}"
        )
    mask = np.ones(len(codebook), dtype=bool)
    if query.cluster is not None:
        if not codebook.is_clustered:
            raise StateError(
                "cluster-scoped retrieval requires a clustered codebook"
            )
        mask &= codebook.cluster_ids == query.cluster
    if query.exclude_ids:
        mask &= ~np.isin(codebook.item_ids, list(query.exclude_ids))
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return RankedResult([], query.method, query.cluster)
    if query.method == "log_likelihood":
        scores = loglik_scores(query.z_bar, codebook.mu[rows], codebook.sigma[rows])
        sort_key = -scores
    else:
        scores = fixed_eps_distances(query.z_bar, codebook.z_fixed[rows])
        sort_key = scores
    order = np.lexsort((codebook.item_ids[rows], sort_key))[: query.k]
    items = [
        (
            int(codebook.item_ids[rows[i]]),
            float(scores[i]),
            codebook.tag_of(rows[i]),
        )
        for i in order
    ]
    return RankedResult(items, query.method, query.cluster)


def average_precision(ranked_tags, query_tag, relevant_total):
    """AP@k with denominator min(relevant_total, k); 0 when nothing can match.

    relevant_total is the number of relevant items in the searched pool, so
    it can never be smaller than the number of matches in the ranking.
    """
    if relevant_total < 0:
        raise ValidationError(f"relevant_total must be >= 0, got {relevant_total}")
    k = len(ranked_tags)
    denom = min(relevant_total, k)
    if denom == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for rank, tag in enumerate(ranked_tags, start=1):
        if tag == query_tag:
            hits += 1
            precision_sum += hits / rank
    if hits == 0:
        return 0.0
    if hits > relevant_total:
        raise ValidationError(
            f"{hits} matches in the ranking but relevant_total={relevant_total}"
        )
    return precision_sum / denom


def evaluate_map(
    codebook,
    queries_per_category,
    cutoffs,
    method,
    scope_mode,
    cluster_model=None,
    seed=0,
):
    """Mean average precision per cutoff for one (scope_mode, method) config.

    Queries are sampled items' own z_fixed vectors with the item itself
    excluded; relevance means carrying the query's category tag. scope_mode
    is "full" or "cluster"; the latter first assigns the query vector to a
    cluster through the supplied model, mirroring the serving path.
    """
    if scope_mode not in ("full", "cluster"):
        raise ValidationError(f"unknown scope_mode {scope_mode!r}")
    if scope_mode == "cluster":
        if cluster_model is None:
            raise ValidationError("cluster scope_mode requires a cluster_model")
        if not codebook.is_clustered:
            raise StateError("cluster scope_mode requires a clustered codebook")
    cutoffs = [int(c) for c in cutoffs]
    if not cutoffs or any(c < 1 for c in cutoffs):
        raise ValidationError(f"cutoffs must be positive, got {cutoffs}")
    rng = np.random.default_rng(seed)
    k_max = max(cutoffs)
    ap_sums = {c: 0.0 for c in cutoffs}
    n_queries = 0
    for code, category in enumerate(CATEGORIES):
        rows = np.flatnonzero(codebook.tag_codes == code)
        if rows.size == 0:
            continue
        n = queries_per_category
        if n > rows.size:
            warnings.warn(
                f"requested {n} queries for {category!r} but only "
                f"{rows.size} items exist; clamping"
            )
            n = rows.size
        chosen = rng.choice(rows, size=n, replace=False)
        for row in chosen:
            z_bar = codebook.z_fixed[row]
            item_id = int(codebook.item_ids[row])
            cluster = (
                assign_cluster(z_bar, cluster_model)
                if scope_mode == "cluster"
                else None
            )
            result = retrieve_top_k(
                RetrievalQuery(
                    z_bar,
                    method=method,
                    k=k_max,
                    cluster=cluster,
                    exclude_ids=frozenset({item_id}),
                ),
                codebook,
            )
            scope_mask = np.ones(len(codebook), dtype=bool)
            if cluster is not None:
                scope_mask &= codebook.cluster_ids == cluster
            scope_mask &= codebook.item_ids != item_id
            relevant_total = int(
                (codebook.tag_codes[scope_mask] == code).sum()
            )
            tags = result.tags()
            for c in cutoffs:
                ap_sums[c] += average_precision(tags[:c], category, relevant_total)
            n_queries += 1
    if n_queries == 0:
        return {c: 0.0 for c in cutoffs}
    return {c: ap_sums[c] / n_queries for c in cutoffs}


MAP_CONFIGS = (
    ("full", "log_likelihood"),
    ("full", "fixed_epsilon"),
    ("cluster", "log_likelihood"),
    ("cluster", "fixed_epsilon"),
)


def map_table(codebook, cluster_model, queries_per_category, cutoffs, seed=0):
    """All four (scope, method) rows as a tab-separated table."""
    cutoffs = [int(c) for c in cutoffs]
    lines = ["Config\t" + "\t".join(f"Top-{c}" for c in cutoffs)]
    for scope_mode, method in MAP_CONFIGS:
        values = evaluate_map(
            codebook,
            queries_per_category,
            cutoffs,
            method,
            scope_mode,
            cluster_model=cluster_model,
            seed=seed,
        )
        row = f"{scope_mode}/{method}"
        lines.append(row + "\t" + "\t".join(f"{values[c]:.4f}" for c in cutoffs))
    return "\n".join(lines) + "\n"
