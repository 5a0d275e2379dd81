import math

import numpy as np
import pytest

from conftest import brute_mean_ap, naive_ap, naive_hamming, naive_mi
from mistream.core import ClassLabeling, Dataset, PercentileLabeling
from mistream.errors import DomainError
from mistream.evaluation import (RankedList, RetrievalBenchmark, auc_over_checkpoints, average_precision,
                                 checkpoint_schedule, correlation_study, dcg, distribution_overlap, mean_ap,
                                 ndcg, pearson)
from mistream.hashing import HashMapping, HashTable, rebuild_table
from mistream.synth import gaussian_clusters


class TestAveragePrecision:
    def test_all_relevant(self):
        assert average_precision([1, 1, 1]) == 1.0

    def test_hand_example(self):
        assert average_precision([1, 0, 1]) == pytest.approx(5 / 6, abs=1e-12)

    def test_no_relevant(self):
        assert average_precision([0, 0]) == 0.0

    def test_cutoff_denominator(self):
        # two of three relevant items fall inside the top 2; denominator is min(3, 2)
        assert average_precision([1, 1, 0, 1], cutoff=2) == 1.0
        assert average_precision([0, 1, 1, 1], cutoff=2) == pytest.approx(0.25)

    def test_bounded(self, rng):
        for _ in range(200):
            rel = rng.random(rng.integers(1, 30)) < 0.4
            k = int(rng.integers(1, 40))
            assert 0 <= average_precision(rel, k) <= 1
            assert average_precision(rel) == pytest.approx(naive_ap(rel))

    def test_ranked_list_tie_break(self):
        rl = RankedList.from_distances([7, 3, 5], [1, 1, 0], [False, True, False])
        np.testing.assert_array_equal(rl.ids, [5, 3, 7])
        assert average_precision(rl) == 0.5


class TestDcg:
    def test_top_hit(self):
        assert dcg([1, 0, 0]) == 1.0 and ndcg([1, 0, 0]) == 1.0

    def test_third_rank(self):
        assert dcg([0, 0, 1]) == pytest.approx(0.5, abs=1e-12)

    def test_perfect_ranking(self):
        assert ndcg([1, 1, 0, 0]) == 1.0

    def test_no_relevant(self):
        assert ndcg([0, 0]) == 0.0

    def test_cutoff(self):
        assert dcg([0, 0, 1], cutoff=2) == 0.0
        assert 0 <= ndcg([0, 1, 0, 1], cutoff=3) <= 1


class TestMeanAp:
    def test_matches_brute_force(self, rng):
        for _ in range(10):
            n, d, b = int(rng.integers(20, 120)), 4, int(rng.integers(2, 17))
            X = rng.standard_normal((n + 10, d))
            y = rng.integers(0, 3, n + 10)
            ids = rng.permutation(10_000)[: n + 10]
            q, r = Dataset(X[:10], y[:10], ids[:10]), Dataset(X[10:], y[10:], ids[10:])
            m = HashMapping(rng.standard_normal((d, b)))
            got = mean_ap(q, rebuild_table(m, r, 1), m, r)
            assert got == pytest.approx(brute_mean_ap(X[:10], y[:10], X[10:], y[10:], ids[10:], m.W), abs=1e-12)

    def test_identical_codes_tie_order(self):
        X = np.ones((6, 2))
        r = Dataset(X, [0, 1, 0, 1, 0, 1], [10, 11, 12, 13, 14, 15])
        q = Dataset(np.ones((1, 2)), [0], [99])
        m = HashMapping(np.ones((2, 4)))
        # ranking by id: relevant at ranks 1, 3, 5
        expected = (1 + 2 / 3 + 3 / 5) / 3
        assert mean_ap(q, rebuild_table(m, r, 1), m, r) == pytest.approx(expected)

    def test_perfect_separation(self):
        r = Dataset(np.array([[1.0], [1.0], [-1.0]]), [0, 0, 1])
        q = Dataset(np.array([[1.0]]), [0], [50])
        m = HashMapping(np.ones((1, 4)))
        assert mean_ap(q, rebuild_table(m, r, 1), m, r) == 1.0

    def test_insertion_order_invariant(self, rng):
        X = rng.standard_normal((40, 3))
        y = rng.integers(0, 2, 40)
        q = Dataset(rng.standard_normal((5, 3)), rng.integers(0, 2, 5), np.arange(100, 105))
        m = HashMapping(rng.standard_normal((3, 4)))
        perm = rng.permutation(40)
        r1, r2 = Dataset(X, y), Dataset(X[perm], y[perm], perm)
        assert mean_ap(q, rebuild_table(m, r1, 1), m, r1) == mean_ap(q, rebuild_table(m, r2, 1), m, r2)

    def test_empty_table(self):
        with pytest.raises(DomainError):
            mean_ap(Dataset(np.ones((1, 2)), [0]), HashTable(np.empty(0), np.empty((0, 1)), 4),
                    HashMapping(np.ones((2, 4))), Dataset(np.empty((0, 2)), np.empty(0)))

    def test_query_excluded_from_own_ranking(self):
        data = Dataset(np.array([[1.0], [1.0], [-1.0]]), [0, 0, 1])
        m = HashMapping(np.ones((1, 2)))
        bench = RetrievalBenchmark(data.subset([0]), data)
        assert not bench.relevance[0, 0]

    def test_cutoff(self, rng):
        data = gaussian_clusters(300, 4, 3, 0.5, seed=1)
        q, r = data.subset(np.arange(20)), data.subset(np.arange(20, 300))
        m = HashMapping(rng.standard_normal((4, 8)))
        t = rebuild_table(m, r, 1)
        assert 0 <= RetrievalBenchmark(q, r, cutoff=10).mean_ap(t, m) <= 1

    def test_percentile_relevance(self, rng):
        data = Dataset(rng.standard_normal((60, 3)))
        bench = RetrievalBenchmark(data.subset(np.arange(5)), data.subset(np.arange(5, 60)),
                                   PercentileLabeling(0.1))
        assert (bench.relevance.sum(axis=1) == math.ceil(0.1 * 55)).all()


class TestAuc:
    def test_constant(self):
        assert auc_over_checkpoints([(1, 0.4), (50, 0.4), (70, 0.4)]) == pytest.approx(0.4)

    def test_ramp(self):
        assert auc_over_checkpoints([(0, 0.0), (100, 1.0)]) == pytest.approx(0.5)

    def test_dense_grid_oracle(self, rng):
        x = np.sort(rng.choice(np.arange(1, 2000), 12, replace=False)).astype(float)
        y = rng.random(12)
        grid = np.linspace(x[0], x[-1], 2_000_001)
        vals = np.interp(grid, x, y)
        riemann = ((vals[1:] + vals[:-1]) / 2).mean()
        got = auc_over_checkpoints(list(zip(x, y)))
        assert got == pytest.approx(riemann, abs=1e-9)
        assert y.min() <= got <= y.max()

    def test_too_few(self):
        with pytest.raises(DomainError):
            auc_over_checkpoints([(1, 0.5)])


class TestPearson:
    def test_linear(self):
        xs = [1.0, 2.0, 4.0, 7.0]
        assert pearson(xs, [2 * x + 1 for x in xs]) == pytest.approx(1.0)
        assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0)

    def test_hand_value(self):
        # centered x = (-1.5, -0.5, 0.5, 1.5), y = (-1, 1, 0, 0): sum xy = 1, Sxx = 5, Syy = 2
        assert pearson([1, 2, 3, 4], [2, 4, 3, 3]) == pytest.approx(1 / math.sqrt(10), abs=1e-12)

    def test_zero_variance(self):
        with pytest.raises(DomainError):
            pearson([1, 1, 1], [1, 2, 3])


class TestCheckpointSchedule:
    def test_properties(self):
        pos = checkpoint_schedule(20100, np.random.default_rng(0))
        assert len(pos) == 50 and np.all(np.diff(pos) > 0)
        assert pos[0] >= 1 and pos[-1] <= 20100
        spacing = 20100 / 50
        assert np.all(np.abs(pos - spacing * np.arange(1, 51)) <= 0.25 * spacing + 1)

    def test_seeded(self):
        a = checkpoint_schedule(1000, np.random.default_rng(1))
        np.testing.assert_array_equal(a, checkpoint_schedule(1000, np.random.default_rng(1)))

    def test_too_short(self):
        with pytest.raises(DomainError):
            checkpoint_schedule(20, 0)


class TestOverlap:
    def test_disjoint_codes(self):
        data = Dataset(np.vstack([np.ones((5, 1)), -np.ones((5, 1))]), np.repeat([0, 1], 5))
        assert distribution_overlap(HashMapping(np.ones((1, 4))), data) == 0.0

    def test_identical_codes(self):
        data = Dataset(np.ones((6, 1)), [0, 1, 0, 1, 0, 1])
        assert distribution_overlap(HashMapping(np.ones((1, 4))), data) == pytest.approx(1.0)


class TestCorrelationStudy:
    def test_single_mapping(self):
        data = gaussian_clusters(200, 4, 3, 0.5, seed=0)
        res = correlation_study(data, n_mappings=1, bits=8, n_queries=20)
        assert len(res.rows) == 1 and res.pearson_ap is None

    def test_seeded_and_consistent(self):
        data = gaussian_clusters(300, 6, 4, 0.4, seed=0)
        a = correlation_study(data, n_mappings=5, bits=8, n_queries=20, seed=3)
        b = correlation_study(data, n_mappings=5, bits=8, n_queries=20, seed=3)
        assert a.rows == b.rows
        for _, mi, ap, dg, nd in a.rows:
            assert mi >= 0 and 0 <= ap <= 1 and 0 <= nd <= 1 and dg > 0

    def test_degenerate_pool(self):
        data = Dataset(np.random.default_rng(0).standard_normal((30, 3)), np.zeros(30, int))
        with pytest.raises(DomainError):
            correlation_study(data, n_mappings=2, bits=4, n_queries=5)
