"""K-means over latent encodings plus the cluster->class mapping and metrics.

Lloyd's algorithm with k-means++ seeding; empty clusters are repaired by
moving the dead center onto the point currently farthest from its own
center. The per-iteration inertia trace is recorded and checked to be
non-increasing.
"""

from __future__ import annotations

import itertools
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ShapeError, ValidationError
from .synthdata import CATEGORIES

CENTERS_MAGIC = b"LLKM1"

FEATURE_KINDS = ("mu", "z_fixed")


@dataclass
class ClusterModel:
    """Fitted k-means state over one feature kind of the codebook."""

    centers: np.ndarray  # (k, d_z)
    feature_kind: str
    assignments: np.ndarray | None
    inertia: float
    inertia_trace: list = field(default_factory=list)
    cluster_to_class: dict | None = None
    seed: int = 0

    @property
    def k(self):
        return self.centers.shape[0]


def _squared_distances(x, centers):
    # direct (n, k, d) form: no cancellation, exact argmin semantics
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    for i in range(1, k):
        d2 = _squared_distances(x, centers[:i]).min(axis=1)
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[i] = x[idx]
    return centers


def _assign_with_repair(x, centers):
    """Assignment step; empty clusters are re-seeded to the farthest point."""
    k = centers.shape[0]
    d2 = _squared_distances(x, centers)
    assign = d2.argmin(axis=1)
    for _ in range(k):
        counts = np.bincount(assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size == 0:
            break
        worst = int(np.argmax(d2[np.arange(x.shape[0]), assign]))
        centers[empties[0]] = x[worst]
        d2 = _squared_distances(x, centers)
        assign = d2.argmin(axis=1)
    return d2, assign


def _lloyd(x, k, rng, max_iters, tol):
    """One k-means++ init plus Lloyd iterations; returns (centers, assign,
    inertia, per-assignment-pass inertia trace)."""
    centers = _kmeans_pp_init(x, k, rng)
    trace = []
    for _ in range(max_iters):
        d2, assign = _assign_with_repair(x, centers)
        inertia = float(d2[np.arange(x.shape[0]), assign].sum())
        if trace:
            assert inertia <= trace[-1] * (1.0 + 1e-12) + 1e-9, (
                f"inertia increased: {trace[-1]} -> {inertia}"
            )
        trace.append(inertia)
        new_centers = centers.copy()
        for c in range(k):
            members = x[assign == c]
            if members.shape[0]:
                new_centers[c] = members.mean(axis=0)
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    d2, assign = _assign_with_repair(x, centers)
    inertia = float(d2[np.arange(x.shape[0]), assign].sum())
    if trace:
        assert inertia <= trace[-1] * (1.0 + 1e-12) + 1e-9
    trace.append(inertia)
    return centers, assign, inertia, trace


def kmeans_fit(
    vectors, k, seed=0, max_iters=300, tol=1e-6, feature_kind="z_fixed", n_init=8
):
    """Lloyd's k-means with k-means++ seeding; stops on center shift < tol.

    Runs n_init seeded restarts and keeps the lowest-inertia fit; single-init
    Lloyd's proved too sensitive to where k-means++ lands on real encodings.
    Deterministic given seed.
    """
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"vectors must be (n, d), got shape {x.shape}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise ValidationError(f"cannot fit k={k} clusters to {x.shape[0]} points")
    if feature_kind not in FEATURE_KINDS:
        raise ValidationError(
            f"unknown feature_kind {feature_kind!r}, expected one of {FEATURE_KINDS}"
        )
    if n_init < 1:
        raise ValidationError(f"n_init must be >= 1, got {n_init}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, assign, inertia, trace = _lloyd(x, k, rng, max_iters, tol)
        if best is None or inertia < best[2]:
            best = (centers, assign, inertia, trace)
    centers, assign, inertia, trace = best
    return ClusterModel(
        centers=centers,
        feature_kind=feature_kind,
        assignments=assign.astype(np.int64),
        inertia=inertia,
        inertia_trace=trace,
        cluster_to_class=None,
        seed=seed,
    )


def assign_cluster(z_bar, model):
    """Nearest center by Euclidean distance; ties go to the lower cluster id."""
    z = np.asarray(z_bar, dtype=float)
    if z.shape != (model.centers.shape[1],):
        raise ShapeError(
            f"z of shape {z.shape}, centers expect ({model.centers.shape[1]},)"
        )
    d2 = ((model.centers - z) ** 2).sum(axis=1)
    return int(d2.argmin())


def map_clusters_to_classes(assignments, tags, k):
    """Best cluster->category mapping by exhaustive permutation search.

    When the number of distinct categories differs from k the bijection does
    not exist; falls back to per-cluster majority vote with a warning.
    """
    assignments = np.asarray(assignments)
    if assignments.shape[0] != len(tags):
        raise ShapeError(
            f"{assignments.shape[0]} assignments vs {len(tags)} tags"
        )
    present = [c for c in CATEGORIES if c in set(tags)]
    if len(present) != k:
        warnings.warn(
            f"{len(present)} classes vs k={k}: falling back to per-cluster "
            "majority vote"
        )
        mapping = {}
        tags_arr = np.asarray(tags)
        for c in range(k):
            members = tags_arr[assignments == c]
            if members.size == 0:
                mapping[c] = present[0] if present else CATEGORIES[0]
            else:
                uniq, counts = np.unique(members, return_counts=True)
                mapping[c] = str(uniq[counts.argmax()])
        return mapping
    tag_idx = {t: i for i, t in enumerate(present)}
    # agreement[c][t] = how many items in cluster c carry tag t
    agreement = np.zeros((k, k), dtype=np.int64)
    for a, t in zip(assignments, tags):
        agreement[a][tag_idx[t]] += 1
    best_perm, best_score = None, -1
    for perm in itertools.permutations(range(k)):
        score = sum(agreement[c][perm[c]] for c in range(k))
        if score > best_score:
            best_perm, best_score = perm, score
    return {c: present[best_perm[c]] for c in range(k)}


@dataclass
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def cluster_metrics(assignments, mapping, tags):
    """One-vs-rest accuracy/precision/recall/F1 per category."""
    predicted = [mapping[int(a)] for a in assignments]
    total = len(tags)
    out = {}
    for category in CATEGORIES:
        if category not in set(tags):
            continue
        tp = sum(1 for p, t in zip(predicted, tags) if p == category and t == category)
        fp = sum(1 for p, t in zip(predicted, tags) if p == category and t != category)
        fn = sum(1 for p, t in zip(predicted, tags) if p != category and t == category)
        tn = total - tp - fp - fn
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if (precision + recall)
            else 0.0
        )
        out[category] = ClassMetrics(
            accuracy=(tp + tn) / total if total else 0.0,
            precision=precision,
            recall=recall,
            f1=f1,
        )
    return out


def metrics_table(metrics):
    """Tab-separated table with columns Class, Accuracy, Precision, Recall, F1."""
    lines = ["Class\tAccuracy\tPrecision\tRecall\tF1"]
    for category in CATEGORIES:
        if category not in metrics:
            continue
        m = metrics[category]
        lines.append(
            f"{category}\t{m.accuracy:.4f}\t{m.precision:.4f}"
            f"\t{m.recall:.4f}\t{m.f1:.4f}"
        )
    return "\n".join(lines) + "\n"


_KIND_TAGS = {name: i for i, name in enumerate(FEATURE_KINDS)}
_CLASS_NONE = 255


def save_centers(path, model):
    """Sidecar centers file: magic, k, d_z, feature kind, centers, class map."""
    k, d = model.centers.shape
    with open(path, "wb") as fh:
        fh.write(CENTERS_MAGIC)
        fh.write(struct.pack("<IIB", k, d, _KIND_TAGS[model.feature_kind]))
        fh.write(struct.pack("<qd", model.seed, model.inertia))
        fh.write(model.centers.astype("<f8").tobytes())
        for c in range(k):
            if model.cluster_to_class is None:
                fh.write(bytes([_CLASS_NONE]))
            else:
                fh.write(bytes([CATEGORIES.index(model.cluster_to_class[c])]))


def load_centers(path):
    """Load a centers sidecar; assignments are not stored here (see codebook)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(CENTERS_MAGIC)] != CENTERS_MAGIC:
        raise ParseError(f"{path}: not a centers file (bad magic)")
    pos = len(CENTERS_MAGIC)
    try:
        k, d, kind_tag = struct.unpack_from("<IIB", data, pos)
        pos += 9
        seed, inertia = struct.unpack_from("<qd", data, pos)
        pos += 16
    except struct.error as exc:
        raise ParseError(f"{path}: truncated header: {exc}")
    if kind_tag >= len(FEATURE_KINDS):
        raise ParseError(f"{path}: unknown feature kind tag {kind_tag}")
    need = k * d * 8 + k
    if len(data) - pos < need:
        raise ParseError(f"{path}: truncated centers block")
    centers = (
        np.frombuffer(data, dtype="<f8", count=k * d, offset=pos)
        .astype(float)
        .reshape(k, d)
    )
    pos += k * d * 8
    class_bytes = data[pos : pos + k]
    mapping = None
    if all(b != _CLASS_NONE for b in class_bytes):
        if any(b >= len(CATEGORIES) for b in class_bytes):
            raise ParseError(f"{path}: unknown category byte in class map")
        mapping = {c: CATEGORIES[b] for c, b in enumerate(class_bytes)}
    return ClusterModel(
        centers=centers,
        feature_kind=FEATURE_KINDS[kind_tag],
        assignments=None,
        inertia=float(inertia),
        inertia_trace=[],
        cluster_to_class=mapping,
        seed=int(seed),
    )
