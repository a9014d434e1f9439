from __future__ import annotations

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from ucmr.encoder import HashingEncoder
from ucmr.segmentation import SubjectSpan
from ucmr.spectral import (
    Rule,
    RuleSet,
    Universe,
    build_similarity_graph,
    build_universe,
    choose_k,
    extract_rules,
    laplacian,
    spectral_cluster,
)


def random_weight_matrix(rng: np.random.Generator, n: int, p_edge: float = 0.6) -> np.ndarray:
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                w[i, j] = w[j, i] = rng.uniform(0.1, 1.0)
    return w


def union_find_components(w: np.ndarray) -> int:
    n = w.shape[0]
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] > 0:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})


class TestGraph:
    def test_single_vertex(self):
        w = build_similarity_graph([np.ones(3)], 1.0)
        assert w.shape == (1, 1) and w[0, 0] == 0.0

    def test_identical_pair(self):
        u = np.ones(3)
        w = build_similarity_graph([u, u.copy()], 1.0)
        assert np.array_equal(w, np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_symmetric_random(self):
        rng = np.random.default_rng(0)
        embs = [rng.normal(size=4) for _ in range(6)]
        w = build_similarity_graph(embs, 1.0)
        assert np.array_equal(w, w.T)
        assert np.all(np.diag(w) == 0.0)
        assert np.all((w >= 0.0) & (w <= 1.0))


class TestLaplacian:
    def test_two_path(self):
        lap = laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.array_equal(lap, np.array([[1.0, -1.0], [-1.0, 1.0]]))
        eig = np.linalg.eigvalsh(lap)
        assert np.allclose(sorted(eig), [0.0, 2.0])

    def test_two_component_multiplicity(self):
        # 6 vertices, two 3-cliques: eigenvalue 0 has multiplicity 2.
        w = np.zeros((6, 6))
        for block in (range(3), range(3, 6)):
            for i in block:
                for j in block:
                    if i != j:
                        w[i, j] = 0.8
        eig = np.linalg.eigvalsh(laplacian(w))
        assert int(np.sum(np.abs(eig) < 1e-10)) == 2

    def test_invariants_random(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(2, 12))
            w = random_weight_matrix(rng, n)
            lap = laplacian(w)
            assert np.array_equal(lap, lap.T)
            assert np.max(np.abs(lap.sum(axis=1))) <= 1e-9
            eig = np.linalg.eigvalsh(lap)
            assert eig[0] >= -1e-8
            zero_mult = int(np.sum(np.abs(eig) < 1e-8))
            assert zero_mult == union_find_components(w)


class TestChooseK:
    @pytest.mark.parametrize("n,k", [(1, 1), (2, 1), (3, 2), (4, 2), (8, 3), (9, 3), (64, 6)])
    def test_values(self, n, k):
        assert choose_k(n) == k

    def test_clamped(self):
        for n in range(1, 40):
            assert 1 <= choose_k(n) <= n


class TestSpectralCluster:
    def test_k1_single_cluster(self):
        rng = np.random.default_rng(1)
        w = random_weight_matrix(rng, 5)
        assert spectral_cluster(w, 1) == [tuple(range(5))]

    def test_planted_two_groups(self):
        enc = HashingEncoder(768)
        texts = ["the hen sneezes loudly"] * 3 + ["clean water for the coop"] * 3
        embs = [enc.encode_sentence(t) for t in texts]
        w = build_similarity_graph(embs, 1.0)
        clusters = spectral_cluster(w, 2, seed=0)
        labels = [None] * 6
        for li, members in enumerate(clusters):
            for v in members:
                labels[v] = li
        assert adjusted_rand_score([0, 0, 0, 1, 1, 1], labels) == 1.0

    def test_distinct_points_all_singletons(self):
        rng = np.random.default_rng(5)
        embs = [rng.normal(size=4) * 4.0 for _ in range(5)]
        w = build_similarity_graph(embs, 0.3)
        clusters = spectral_cluster(w, 5, seed=0)
        assert sorted(clusters) == [(0,), (1,), (2,), (3,), (4,)]

    def test_partition(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            n = int(rng.integers(2, 10))
            w = random_weight_matrix(rng, n)
            k = choose_k(n)
            clusters = spectral_cluster(w, k, seed=0)
            flattened = sorted(v for c in clusters for v in c)
            assert flattened == list(range(n))

    def test_k_bounds(self):
        w = np.zeros((3, 3))
        with pytest.raises(ValueError):
            spectral_cluster(w, 0)
        with pytest.raises(ValueError):
            spectral_cluster(w, 4)


class TestExtractRules:
    enc = HashingEncoder(768)

    def test_singleton_span(self):
        span = SubjectSpan(0, (4,))
        rs = extract_rules(span, [self.enc.encode_sentence("only one")])
        assert len(rs.rules) == 1
        assert rs.rules[0].member_sentence_ids == (4,)

    def test_planted_three_groups_of_eight(self):
        texts = (
            ["feathers fall out in patches today"] * 3
            + ["the comb turns pale and dry"] * 3
            + ["eggs come soft shelled and thin"] * 2
        )
        embs = [self.enc.encode_sentence(t) for t in texts]
        span = SubjectSpan(0, tuple(range(10, 18)))
        rs = extract_rules(span, embs, seed=0)
        groups = sorted(r.member_sentence_ids for r in rs.rules)
        assert groups == [(10, 11, 12), (13, 14, 15), (16, 17)]

    def test_deterministic_rule_ids(self):
        texts = ["alpha beta gamma"] * 2 + ["delta epsilon zeta"] * 2
        embs = [self.enc.encode_sentence(t) for t in texts]
        span = SubjectSpan(1, (0, 1, 2, 3))
        first = extract_rules(span, embs, seed=0)
        second = extract_rules(span, embs, seed=0)
        assert [r.rule_id for r in first.rules] == [r.rule_id for r in second.rules]

    def test_centroid_is_member_mean(self):
        texts = ["aaa bbb", "aaa bbb", "ccc ddd", "ccc ddd"]
        embs = [self.enc.encode_sentence(t) for t in texts]
        span = SubjectSpan(0, (0, 1, 2, 3))
        rs = extract_rules(span, embs, seed=0)
        for rule in rs.rules:
            members = [embs[i] for i in rule.member_sentence_ids]
            assert np.allclose(rule.centroid, np.mean(members, axis=0))


def make_rule(rule_id_members, span_id, centroid):
    return Rule(
        rule_id=f"id-{'-'.join(map(str, rule_id_members))}",
        member_sentence_ids=tuple(rule_id_members),
        centroid=np.asarray(centroid, dtype=np.float64),
        subject_span_id=span_id,
    )


class TestBuildUniverse:
    def test_disjoint_sizes(self):
        a = RuleSet(0, (make_rule([0], 0, [1, 0]), make_rule([1], 0, [0, 1])))
        b = RuleSet(
            1,
            (
                make_rule([2], 1, [1, 1]),
                make_rule([3], 1, [-1, 0]),
                make_rule([4], 1, [0, -1]),
            ),
        )
        universe, q = build_universe([a, b])
        assert len(universe) == 5
        assert q == [{0, 1}, {2, 3, 4}]

    def test_duplicate_rule_counted_once(self):
        shared = make_rule([7], 0, [1.0, 0.0])
        a = RuleSet(0, (shared,))
        b = RuleSet(1, (shared, make_rule([8], 1, [0.0, -1.0])))
        universe, q = build_universe([a, b])
        assert len(universe) == 2
        assert q == [{0}, {0, 1}]

    def test_cosine_merge_counts(self):
        # Cross-subject centroids with cosine >= 0.95 merge into the earlier id.
        a = RuleSet(0, (make_rule([0], 0, [1.0, 0.0, 0.0]),))
        b = RuleSet(1, (make_rule([5], 1, [1.0, 0.01, 0.0]),))
        c = RuleSet(2, (make_rule([9], 2, [0.0, 1.0, 0.0]),))
        universe, q = build_universe([a, b, c])
        merges = 1
        total = 3
        assert len(universe) == total - merges
        assert q == [{0}, {0}, {1}]
        assert universe.rules[0].rule_id == "id-0"

    def test_every_rule_resolves(self):
        enc = HashingEncoder(128)
        rule_sets = []
        for span_id, words in enumerate((["aa bb"] * 3, ["cc dd"] * 3)):
            embs = [enc.encode_sentence(w) for w in words]
            span = SubjectSpan(span_id, tuple(range(span_id * 3, span_id * 3 + 3)))
            rule_sets.append(extract_rules(span, embs, seed=0))
        universe, q = build_universe(rule_sets)
        for indices in q:
            for i in indices:
                assert 0 <= i < len(universe)

    def test_indicator(self):
        a = RuleSet(0, (make_rule([0], 0, [1, 0]), make_rule([1], 0, [0, 1])))
        universe, _ = build_universe([a])
        assert np.array_equal(universe.indicator([1]), np.array([0.0, 1.0]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_universe([])
