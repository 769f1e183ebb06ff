import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentlab import clustering, retrieval
from latentlab.errors import ShapeError, StateError, ValidationError
from latentlab.retrieval import RetrievalQuery
from latentlab.synthdata import CATEGORIES
from conftest import random_codebook


def brute_force_rank(query, book):
    """Independent oracle: python sort over python floats, same tie rule."""
    rows = []
    for i in range(len(book)):
        if query.cluster is not None and book.cluster_ids[i] != query.cluster:
            continue
        if int(book.item_ids[i]) in query.exclude_ids:
            continue
        if query.method == "log_likelihood":
            s = 0.0
            for j in range(book.d_z):
                mu, sg = book.mu[i, j], book.sigma[i, j]
                s += -((query.z_bar[j] - mu) ** 2) / (2 * sg * sg) - np.log(
                    np.sqrt(2 * np.pi) * sg
                )
            key = -s
            score = s
        else:
            d = 0.0
            for j in range(book.d_z):
                d += (query.z_bar[j] - book.z_fixed[i, j]) ** 2
            score = np.sqrt(d)
            key = score
        rows.append((key, int(book.item_ids[i]), score))
    rows.sort()
    return [(item_id, score) for _, item_id, score in rows[: query.k]]


class TestScores:
    def test_loglik_at_mu_unit_sigma_d16(self):
        mu = np.zeros(16)
        val = retrieval.loglik_score(mu, mu, np.ones(16))
        assert val == pytest.approx(-8.0 * np.log(2 * np.pi), abs=1e-12)

    def test_loglik_one_dim_unit_offset(self):
        val = retrieval.loglik_score(np.array([1.0]), np.zeros(1), np.ones(1))
        assert val == pytest.approx(-0.5 - np.log(np.sqrt(2 * np.pi)), abs=1e-12)

    def test_loglik_rejects_nonpositive_sigma(self):
        with pytest.raises(ValidationError):
            retrieval.loglik_score(np.zeros(2), np.zeros(2), np.array([1.0, 0.0]))

    def test_loglik_rejects_length_mismatch(self):
        with pytest.raises(ShapeError):
            retrieval.loglik_score(np.zeros(2), np.zeros(3), np.ones(3))

    def test_equal_sigma_prefers_smaller_distance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = int(rng.integers(1, 10))
            z = rng.normal(size=d)
            mu_a = rng.normal(size=d)
            mu_b = rng.normal(size=d)
            sigma = np.full(d, float(rng.uniform(0.1, 3.0)))
            sa = retrieval.loglik_score(z, mu_a, sigma)
            sb = retrieval.loglik_score(z, mu_b, sigma)
            da = np.linalg.norm(z - mu_a)
            db = np.linalg.norm(z - mu_b)
            if da < db:
                assert sa > sb
            elif db < da:
                assert sb > sa

    def test_loglik_maximized_at_mu(self):
        rng = np.random.default_rng(1)
        mu = rng.normal(size=8)
        sigma = rng.uniform(0.2, 2.0, size=8)
        peak = retrieval.loglik_score(mu, mu, sigma)
        for _ in range(50):
            perturbed = mu + rng.normal(size=8) * rng.uniform(0.01, 2.0)
            assert retrieval.loglik_score(perturbed, mu, sigma) < peak

    def test_fixed_eps_distance_identity(self):
        z = np.array([1.0, 2.0, 3.0])
        assert retrieval.fixed_eps_distance(z, z) == 0.0

    def test_fixed_eps_distance_three_four_five(self):
        a = np.array([0.0, 0.0])
        b = np.array([3.0, 4.0])
        assert retrieval.fixed_eps_distance(a, b) == pytest.approx(5.0, abs=1e-12)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_fixed_eps_distance_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 12))
        a, b = rng.normal(size=d), rng.normal(size=d)
        assert retrieval.fixed_eps_distance(a, b) == retrieval.fixed_eps_distance(b, a)

    def test_vectorized_matches_scalar(self):
        book = random_codebook(n=40, d_z=6, seed=2)
        z = np.random.default_rng(3).normal(size=6)
        lls = retrieval.loglik_scores(z, book.mu, book.sigma)
        dds = retrieval.fixed_eps_distances(z, book.z_fixed)
        for i in range(len(book)):
            assert lls[i] == pytest.approx(
                retrieval.loglik_score(z, book.mu[i], book.sigma[i]), rel=1e-12
            )
            assert dds[i] == pytest.approx(
                retrieval.fixed_eps_distance(z, book.z_fixed[i]), rel=1e-12
            )


class TestRetrieveTopK:
    def test_self_retrieval_rank_one(self):
        book = random_codebook(n=30, d_z=5, seed=4)
        q = RetrievalQuery(book.z_fixed[7], method="fixed_epsilon", k=3)
        result = retrieval.retrieve_top_k(q, book)
        assert result.items[0][0] == 7
        assert result.items[0][1] == 0.0

    def test_exclude_ids_respected(self):
        book = random_codebook(n=30, d_z=5, seed=4)
        q = RetrievalQuery(
            book.z_fixed[7], method="fixed_epsilon", k=5, exclude_ids=frozenset({7})
        )
        result = retrieval.retrieve_top_k(q, book)
        assert 7 not in result.ids()

    @pytest.mark.parametrize("method", retrieval.METHODS)
    @pytest.mark.parametrize("scoped", [False, True])
    def test_matches_brute_force_sort(self, method, scoped):
        book = random_codebook(n=80, d_z=6, seed=5, clustered=True)
        rng = np.random.default_rng(6)
        for _ in range(25):
            cluster = int(rng.integers(0, 3)) if scoped else None
            q = RetrievalQuery(
                rng.normal(size=6), method=method, k=10, cluster=cluster
            )
            got = retrieval.retrieve_top_k(q, book)
            expected = brute_force_rank(q, book)
            assert got.ids() == [i for i, _ in expected]
            for (gi, gs, _), (ei, es) in zip(got.items, expected):
                assert gs == pytest.approx(es, rel=1e-9)

    def test_tie_breaks_by_lower_item_id(self):
        # two identical encodings: the lower id must win
        book = random_codebook(n=10, d_z=4, seed=7)
        book.z_fixed[8] = book.z_fixed[3]
        q = RetrievalQuery(book.z_fixed[3], method="fixed_epsilon", k=2)
        result = retrieval.retrieve_top_k(q, book)
        assert result.ids() == [3, 8]

    def test_k_at_least_scope_returns_full_scope_monotone(self):
        book = random_codebook(n=25, d_z=4, seed=8, clustered=False)
        q = RetrievalQuery(np.zeros(4), method="fixed_epsilon", k=100)
        result = retrieval.retrieve_top_k(q, book)
        assert len(result.items) == 25
        scores = [s for _, s, _ in result.items]
        assert scores == sorted(scores)
        q2 = RetrievalQuery(np.zeros(4), method="log_likelihood", k=100)
        scores2 = [s for _, s, _ in retrieval.retrieve_top_k(q2, book).items]
        assert scores2 == sorted(scores2, reverse=True)

    def test_cluster_scope_without_annotations_is_state_error(self):
        book = random_codebook(n=10, d_z=4, seed=9, clustered=False)
        q = RetrievalQuery(np.zeros(4), method="fixed_epsilon", k=3, cluster=0)
        with pytest.raises(StateError):
            retrieval.retrieve_top_k(q, book)

    def test_empty_scope_returns_empty_result(self):
        book = random_codebook(n=10, d_z=4, seed=10, clustered=True, k=3)
        book.cluster_ids[:] = 0
        q = RetrievalQuery(np.zeros(4), method="fixed_epsilon", k=3, cluster=2)
        result = retrieval.retrieve_top_k(q, book)
        assert result.items == []

    def test_unknown_method_rejected(self):
        with pytest.raises(ValidationError, match="method"):
            RetrievalQuery(np.zeros(4), method="cosine")

    def test_nonpositive_k_rejected(self):
        with pytest.raises(ValidationError):
            RetrievalQuery(np.zeros(4), k=0)

    def test_equal_sigma_ranking_equals_euclidean_to_mu(self):
        book = random_codebook(n=60, d_z=6, seed=11)
        book.sigma[...] = 0.7  # constant sigma everywhere
        rng = np.random.default_rng(12)
        for _ in range(100):
            z = rng.normal(size=6)
            ll = retrieval.retrieve_top_k(
                RetrievalQuery(z, method="log_likelihood", k=60), book
            )
            order_ll = ll.ids()
            d_mu = np.linalg.norm(book.mu - z, axis=1)
            order_mu = [
                int(book.item_ids[i]) for i in np.lexsort((book.item_ids, d_mu))
            ]
            assert order_ll == order_mu


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert retrieval.average_precision(["a"] * 5, "a", relevant_total=9) == 1.0

    def test_no_matches(self):
        assert retrieval.average_precision(["b"] * 5, "a", relevant_total=9) == 0.0

    def test_hand_computed_case(self):
        # [match, match, miss, match], relevant_total=3:
        # (1/1 + 2/2 + 3/4) / 3 = 0.9166...
        ap = retrieval.average_precision(["a", "a", "b", "a"], "a", relevant_total=3)
        assert ap == pytest.approx(2.75 / 3, abs=1e-12)
        assert round(ap, 5) == 0.91667

    def test_zero_relevant_total(self):
        assert retrieval.average_precision(["a", "a"], "a", relevant_total=0) == 0.0

    def test_empty_ranking(self):
        assert retrieval.average_precision([], "a", relevant_total=5) == 0.0

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_bounded_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 20))
        tags = [("a" if rng.random() < 0.4 else "b") for _ in range(k)]
        # the searched pool always contains at least the matches it returned
        rel = tags.count("a") + int(rng.integers(0, 30))
        ap = retrieval.average_precision(tags, "a", rel)
        assert 0.0 <= ap <= 1.0

    def test_inconsistent_relevant_total_rejected(self):
        with pytest.raises(ValidationError, match="relevant_total"):
            retrieval.average_precision(["a", "a", "a"], "a", relevant_total=2)


def separable_codebook(per_category=30, d_z=6, spread=0.05, seed=0):
    """Three tight blobs, one per category, trivially separable."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, d_z))
    centers[0, 0] = 10.0
    centers[1, 1] = 10.0
    centers[2, 2] = 10.0
    mus, tags = [], []
    for c in range(3):
        mus.append(centers[c] + rng.normal(size=(per_category, d_z)) * spread)
        tags += [c] * per_category
    mu = np.vstack(mus)
    sigma = np.full_like(mu, 0.3)
    eps = rng.normal(size=d_z)
    from latentlab import codebook as cb

    return cb.Codebook(
        item_ids=np.arange(mu.shape[0]),
        tag_codes=np.array(tags),
        mu=mu,
        sigma=sigma,
        z_fixed=mu + sigma * eps,
        epsilon_shared=eps,
    )


class TestEvaluateMap:
    def test_separable_corpus_gives_perfect_map(self):
        book = separable_codebook()
        values = retrieval.evaluate_map(
            book, queries_per_category=10, cutoffs=[5, 10], method="fixed_epsilon",
            scope_mode="full", seed=1,
        )
        assert values[5] == pytest.approx(1.0)
        assert values[10] == pytest.approx(1.0)

    def test_deterministic_given_seed(self):
        book = separable_codebook(spread=3.0)
        km = clustering.kmeans_fit(book.z_fixed, 3, seed=2)
        annotated = book.with_cluster_ids(km.assignments)
        tables = [
            retrieval.map_table(annotated, km, 5, [3, 7], seed=9) for _ in range(2)
        ]
        assert tables[0] == tables[1]

    def test_clamps_oversized_query_count_with_warning(self):
        book = separable_codebook(per_category=4)
        with pytest.warns(UserWarning, match="clamp"):
            values = retrieval.evaluate_map(
                book, queries_per_category=10, cutoffs=[3],
                method="fixed_epsilon", scope_mode="full", seed=3,
            )
        assert 0.0 <= values[3] <= 1.0

    def test_cluster_scope_requires_model_and_annotations(self):
        book = separable_codebook()
        with pytest.raises(ValidationError):
            retrieval.evaluate_map(
                book, 2, [3], "fixed_epsilon", "cluster", cluster_model=None, seed=0
            )
        km = clustering.kmeans_fit(book.z_fixed, 3, seed=4)
        with pytest.raises(StateError):
            retrieval.evaluate_map(
                book, 2, [3], "fixed_epsilon", "cluster", cluster_model=km, seed=0
            )

    def test_table_shape_matches_four_configs(self):
        book = separable_codebook()
        km = clustering.kmeans_fit(book.z_fixed, 3, seed=5)
        annotated = book.with_cluster_ids(km.assignments)
        table = retrieval.map_table(annotated, km, 3, [2, 4], seed=6)
        lines = table.strip().splitlines()
        assert lines[0] == "Config\tTop-2\tTop-4"
        assert len(lines) == 5
        assert lines[1].startswith("full/log_likelihood\t")
        assert lines[4].startswith("cluster/fixed_epsilon\t")
