"""Per-item latent encodings (mu, sigma, fixed-epsilon z) with binary persistence.

The codebook is the pipeline's database: one row per corpus item holding the
posterior parameters and the z-vector computed with the single shared epsilon,
plus checksums tying it to the model and corpus that produced it. sigma is
stored directly (retrieval divides by sigma^2) and floored so no dimension
collapses to zero.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn, ppm
from .errors import (
    EmptyCorpusError,
    ParseError,
    ShapeError,
    StaleCodebookError,
    StaleCodebookWarning,
    ValidationError,
)
from .synthdata import CATEGORIES

MAGIC = b"LLCB1"
SIGMA_FLOOR = 1e-6

_TAG_CODES = {cat: i for i, cat in enumerate(CATEGORIES)}


@dataclass
class ItemEncoding:
    """One row of the codebook."""

    item_id: int
    mu: np.ndarray
    sigma: np.ndarray
    z_fixed: np.ndarray
    tag: str
    cluster_id: int | None = None


class Codebook:
    """Ordered, immutable store of per-item encodings plus the shared epsilon.

    Vector data lives in (n, d_z) arrays for fast scanning; entry(i) exposes
    a row as an ItemEncoding. cluster_ids uses -1 for "not clustered yet".
    """

    def __init__(
        self,
        item_ids,
        tag_codes,
        mu,
        sigma,
        z_fixed,
        epsilon_shared,
        model_checksum=b"\x00" * 32,
        corpus_checksum=b"\x00" * 32,
        cluster_ids=None,
    ):
        self.item_ids = np.asarray(item_ids, dtype=np.int64)
        self.tag_codes = np.asarray(tag_codes, dtype=np.int64)
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.z_fixed = np.asarray(z_fixed, dtype=float)
        self.epsilon_shared = np.asarray(epsilon_shared, dtype=float)
        self.model_checksum = bytes(model_checksum)
        self.corpus_checksum = bytes(corpus_checksum)
        n = self.item_ids.shape[0]
        if cluster_ids is None:
            self.cluster_ids = np.full(n, -1, dtype=np.int64)
        else:
            self.cluster_ids = np.asarray(cluster_ids, dtype=np.int64)
        for name, arr in (
            ("tag_codes", self.tag_codes),
            ("cluster_ids", self.cluster_ids),
        ):
            if arr.shape != (n,):
                raise ShapeError(f"{name} shape {arr.shape} does not match n={n}")
        d = self.epsilon_shared.shape[0]
        for name, arr in (
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("z_fixed", self.z_fixed),
        ):
            if arr.shape != (n, d):
                raise ShapeError(
                    f"{name} shape {arr.shape} does not match (n={n}, d_z={d})"
                )
        if n and self.sigma.min() <= 0:
            raise ValidationError("sigma must be positive everywhere")

    @property
    def d_z(self):
        return self.epsilon_shared.shape[0]

    def __len__(self):
        return self.item_ids.shape[0]

    def tag_of(self, row):
        return CATEGORIES[self.tag_codes[row]]

    @property
    def tags(self):
        return [CATEGORIES[c] for c in self.tag_codes]

    def entry(self, row):
        cid = int(self.cluster_ids[row])
        return ItemEncoding(
            item_id=int(self.item_ids[row]),
            mu=self.mu[row],
            sigma=self.sigma[row],
            z_fixed=self.z_fixed[row],
            tag=self.tag_of(row),
            cluster_id=None if cid < 0 else cid,
        )

    def __iter__(self):
        return (self.entry(i) for i in range(len(self)))

    @property
    def is_clustered(self):
        return len(self) > 0 and bool((self.cluster_ids >= 0).all())

    def with_cluster_ids(self, assignments):
        """New codebook version carrying cluster annotations."""
        assignments = np.asarray(assignments, dtype=np.int64)
        if assignments.shape != self.item_ids.shape:
            raise ShapeError(
                f"assignments shape {assignments.shape} does not match "
                f"{self.item_ids.shape}"
            )
        return Codebook(
            self.item_ids,
            self.tag_codes,
            self.mu,
            self.sigma,
            self.z_fixed,
            self.epsilon_shared,
            self.model_checksum,
            self.corpus_checksum,
            cluster_ids=assignments,
        )


def sample_shared_epsilon(d_z, seed):
    """The one epsilon vector shared by every fixed-epsilon encoding."""
    if d_z < 1:
        raise ValidationError(f"d_z must be >= 1, got {d_z}")
    return np.random.default_rng(seed).standard_normal(d_z)


def model_fingerprint(model):
    """sha256 over the model's checkpoint serialization (float32 blob)."""
    data = nn.checkpoint_bytes(model.d_z, model.image_dims, model.named_layers())
    return hashlib.sha256(data).digest()


def corpus_fingerprint(corpus):
    """sha256 over dims, tags, and 8-bit-quantized pixels in item order."""
    h = hashlib.sha256()
    dims = corpus.dims
    h.update(struct.pack("<3I", *dims))
    for i, tag in enumerate(corpus.tags):
        h.update(bytes([_TAG_CODES[tag]]))
        h.update(ppm.to_bytes8(corpus.images[i]).tobytes())
    return h.digest()


def build_codebook(model, corpus, epsilon_shared):
    """Encode every corpus item and freeze z with the shared epsilon."""
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot build a codebook from an empty corpus")
    eps = np.asarray(epsilon_shared, dtype=float)
    if eps.shape != (model.d_z,):
        raise ShapeError(
            f"epsilon of shape {eps.shape}, model expects ({model.d_z},)"
        )
    flat = corpus.images.reshape(len(corpus), -1)
    if flat.shape[1] != model.flat_dim:
        raise ShapeError(
            f"corpus items have {flat.shape[1]} pixels, model expects "
            f"{model.flat_dim}"
        )
    mu, logvar = model.encode_batch(flat)
    sigma = np.maximum(np.exp(0.5 * logvar), SIGMA_FLOOR)
    z_fixed = mu + sigma * eps
    return Codebook(
        item_ids=np.arange(len(corpus)),
        tag_codes=[_TAG_CODES[tag] for tag in corpus.tags],
        mu=mu,
        sigma=sigma,
        z_fixed=z_fixed,
        epsilon_shared=eps,
        model_checksum=model_fingerprint(model),
        corpus_checksum=corpus_fingerprint(corpus),
    )


def _record_dtype(d_z):
    return np.dtype(
        [
            ("item_id", "<u8"),
            ("tag", "u1"),
            ("cluster", "<i4"),
            ("mu", "<f8", (d_z,)),
            ("sigma", "<f8", (d_z,)),
            ("z_fixed", "<f8", (d_z,)),
        ]
    )


def save_codebook(path, codebook):
    """Header (magic, d_z, count, epsilon, checksums) then fixed-size records."""
    d = codebook.d_z
    n = len(codebook)
    records = np.zeros(n, dtype=_record_dtype(d))
    records["item_id"] = codebook.item_ids
    records["tag"] = codebook.tag_codes
    records["cluster"] = codebook.cluster_ids
    records["mu"] = codebook.mu
    records["sigma"] = codebook.sigma
    records["z_fixed"] = codebook.z_fixed
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", d, n))
        fh.write(codebook.epsilon_shared.astype("<f8").tobytes())
        fh.write(codebook.model_checksum)
        fh.write(codebook.corpus_checksum)
        fh.write(records.tobytes())


def load_codebook(path, model=None):
    """Load and integrity-check a codebook; optionally validate against a model.

    A d_z mismatch with the supplied model raises StaleCodebookError; a
    checksum mismatch only warns (the file is usable, just not produced by
    this exact model).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: not a codebook file (bad magic)")
    pos = len(MAGIC)
    try:
        d_z, n = struct.unpack_from("<IQ", data, pos)
    except struct.error as exc:
        raise ParseError(f"{path}: truncated header: {exc}")
    pos += 12
    eps_bytes = d_z * 8
    if len(data) < pos + eps_bytes + 64:
        raise ParseError(f"{path}: truncated header (epsilon/checksums)")
    epsilon = np.frombuffer(data, dtype="<f8", count=d_z, offset=pos).astype(float)
    pos += eps_bytes
    model_sum = data[pos : pos + 32]
    corpus_sum = data[pos + 32 : pos + 64]
    pos += 64
    rec_dtype = _record_dtype(d_z)
    have = len(data) - pos
    if have < n * rec_dtype.itemsize:
        raise ParseError(
            f"{path}: truncated at record {have // rec_dtype.itemsize} "
            f"of {n}"
        )
    records = np.frombuffer(data, dtype=rec_dtype, count=n, offset=pos)
    sigma = records["sigma"].astype(float)
    if n and sigma.min() <= 0:
        bad = int(np.argwhere(sigma.min(axis=1) <= 0)[0][0])
        raise ParseError(f"{path}: record {bad}: non-positive sigma")
    if n and records["tag"].max() >= len(CATEGORIES):
        bad = int(np.argmax(records["tag"] >= len(CATEGORIES)))
        raise ParseError(f"{path}: record {bad}: unknown tag byte")
    mu = records["mu"].astype(float)
    z_fixed = records["z_fixed"].astype(float)
    recomputed = mu + sigma * epsilon
    if not np.array_equal(recomputed, z_fixed):
        bad = int(np.argmax((recomputed != z_fixed).any(axis=1)))
        raise ParseError(
            f"{path}: record {bad}: z_fixed does not equal mu + sigma * epsilon"
        )
    codebook = Codebook(
        item_ids=records["item_id"].astype(np.int64),
        tag_codes=records["tag"].astype(np.int64),
        mu=mu,
        sigma=sigma,
        z_fixed=z_fixed,
        epsilon_shared=epsilon,
        model_checksum=model_sum,
        corpus_checksum=corpus_sum,
        cluster_ids=records["cluster"].astype(np.int64),
    )
    if model is not None:
        if model.d_z != codebook.d_z:
            raise StaleCodebookError(
                f"{path}: codebook d_z={codebook.d_z} does not match model "
                f"d_z={model.d_z}"
            )
        if model_fingerprint(model) != codebook.model_checksum:
            warnings.warn(
                f"{path}: codebook was built from a different model (checksum "
                "mismatch); encodings may be stale",
                StaleCodebookWarning,
            )
    return codebook
