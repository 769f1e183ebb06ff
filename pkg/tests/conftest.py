"""Shared fixtures. The expensive trained-pipeline fixture is session-scoped
and can be cached across runs by setting LATENTLAB_TEST_CACHE=1 (artifacts
are deterministic, so the cache is sound as long as the code is unchanged)."""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from latentlab import clustering, codebook, synthdata, vae

BIG_CORPUS_SEED = 101
BIG_TRAIN_SEED = 202
BIG_EPS_SEED = 303
BIG_KMEANS_SEED = 404
IMB_CORPUS_SEED = 505
BIG_EPOCHS = 50


class PipelineArtifacts:
    """Everything the acceptance suite needs from one full training run."""

    def __init__(self, root):
        self.root = Path(root)
        self.model_path = self.root / "model.llnn"
        self.corpus_dir = self.root / "corpus"
        self.train_seconds = None
        self.trace = None

    def build(self):
        t0 = time.time()
        corpus = synthdata.generate_corpus(
            synthdata.BALANCED_COUNTS, dims=(32, 32), seed=BIG_CORPUS_SEED
        )
        synthdata.save_corpus(corpus, self.corpus_dir)
        model = vae.VaeModel.create(
            image_dims=(32, 32, 3), d_z=16, hidden=(512, 128), seed=BIG_TRAIN_SEED
        )
        config = vae.TrainConfig(
            epochs=BIG_EPOCHS, batch_size=64, learning_rate=1e-3,
            seed=BIG_TRAIN_SEED, kl_weight=1.0,
        )
        t_train = time.time()
        model, trace = vae.train(model, corpus.images, config)
        self.train_seconds = time.time() - t_train
        self.trace = trace
        vae.save_model(self.model_path, model)
        (self.root / "meta.txt").write_text(
            f"{self.train_seconds}\n"
            + "\n".join(
                f"{e}\t{r!r}\t{k!r}\t{t!r}" for e, r, k, t in trace
            )
            + "\n"
        )
        print(f"\n[fixture] corpus+training built in {time.time() - t0:.0f}s")

    def load_meta(self):
        lines = (self.root / "meta.txt").read_text().splitlines()
        self.train_seconds = float(lines[0])
        self.trace = [
            tuple(
                (int(f) if i == 0 else float(f))
                for i, f in enumerate(line.split("\t"))
            )
            for line in lines[1:]
        ]

    @property
    def complete(self):
        return self.model_path.exists() and (self.root / "meta.txt").exists()


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """Balanced 3x1000 corpus at 32x32x3, trained 50 epochs, plus codebook
    and k-means fits on both feature kinds, plus the imbalanced-preset
    encodings from the same model."""
    if os.environ.get("LATENTLAB_TEST_CACHE") == "1":
        root = Path(__file__).resolve().parent / ".cache" / "trained"
        root.mkdir(parents=True, exist_ok=True)
    else:
        root = tmp_path_factory.mktemp("trained")
    art = PipelineArtifacts(root)
    if not art.complete:
        art.build()
    else:
        art.load_meta()

    art.corpus = synthdata.load_corpus(art.corpus_dir)
    art.model = vae.load_model(art.model_path)
    art.epsilon = codebook.sample_shared_epsilon(art.model.d_z, BIG_EPS_SEED)
    art.book = codebook.build_codebook(art.model, art.corpus, art.epsilon)
    art.kmeans = {}
    for kind in clustering.FEATURE_KINDS:
        features = art.book.z_fixed if kind == "z_fixed" else art.book.mu
        art.kmeans[kind] = clustering.kmeans_fit(
            features, 3, seed=BIG_KMEANS_SEED, feature_kind=kind
        )
    art.book_clustered = art.book.with_cluster_ids(
        art.kmeans["z_fixed"].assignments
    )

    imb = synthdata.generate_corpus(
        synthdata.IMBALANCED_COUNTS, dims=(32, 32), seed=IMB_CORPUS_SEED
    )
    art.imb_corpus = imb
    art.imb_book = codebook.build_codebook(art.model, imb, art.epsilon)
    art.imb_kmeans = clustering.kmeans_fit(
        art.imb_book.z_fixed, 3, seed=BIG_KMEANS_SEED, feature_kind="z_fixed"
    )
    return art


@pytest.fixture(scope="session")
def tiny_corpus():
    """Fast 3x12 corpus at 16x16 for contract-level tests."""
    return synthdata.generate_corpus((12, 12, 12), dims=(16, 16), seed=900)


@pytest.fixture(scope="session")
def tiny_model():
    return vae.VaeModel.create(image_dims=(16, 16, 3), d_z=4, hidden=(64, 24), seed=901)


@pytest.fixture(scope="session")
def tiny_book(tiny_model, tiny_corpus):
    eps = codebook.sample_shared_epsilon(tiny_model.d_z, 902)
    return codebook.build_codebook(tiny_model, tiny_corpus, eps)


def random_codebook(n=60, d_z=8, seed=0, clustered=True, k=3):
    """Synthetic codebook with hand-controllable stats; no model involved."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=(n, d_z))
    sigma = rng.uniform(0.2, 2.0, size=(n, d_z))
    eps = rng.normal(size=d_z)
    z = mu + sigma * eps
    tags = rng.integers(0, 3, size=n)
    clusters = rng.integers(0, k, size=n) if clustered else None
    return codebook.Codebook(
        item_ids=np.arange(n),
        tag_codes=tags,
        mu=mu,
        sigma=sigma,
        z_fixed=z,
        epsilon_shared=eps,
        cluster_ids=clusters,
    )
