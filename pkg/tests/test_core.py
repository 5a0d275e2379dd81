import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import examples
from mistream.core import (ClassLabeling, Dataset, Example, NeighborPartition, PercentileLabeling,
                           nearest_rank_threshold, parse_labeling, partition_by_class,
                           partition_by_distance)
from mistream.errors import DomainError, LabelingError


class TestExample:
    def test_features_read_only(self):
        ex = Example([1.0, 2.0], 3, 9)
        with pytest.raises(ValueError):
            ex.features[0] = 5.0
        assert ex.dim == 2 and ex.label == 3 and ex.id == 9

    def test_unlabeled(self):
        assert Example(np.zeros(3)).label is None


class TestDataset:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((2, 3)), ids=[4, 4])

    def test_label_length_checked(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((3, 2)), labels=[0, 1])

    def test_roundtrip_through_examples(self):
        d = Dataset(np.arange(6.0).reshape(3, 2), [0, 1, 1], [10, 11, 12])
        back = Dataset.from_examples(list(d))
        np.testing.assert_array_equal(back.features, d.features)
        np.testing.assert_array_equal(back.labels, d.labels)
        np.testing.assert_array_equal(back.ids, d.ids)
        assert d[1].id == 11 and d[1].label == 1

    def test_subset_keeps_ids(self):
        d = Dataset(np.arange(8.0).reshape(4, 2), ids=[5, 6, 7, 8])
        np.testing.assert_array_equal(d.subset([3, 1]).ids, [8, 6])


class TestNeighborPartition:
    def test_overlap_rejected(self):
        a, b = examples([[0.0], [1.0]])
        with pytest.raises(DomainError):
            NeighborPartition(a, [b], [b])

    def test_anchor_in_partition_rejected(self):
        a, b = examples([[0.0], [1.0]])
        with pytest.raises(DomainError):
            NeighborPartition(a, [a], [b])


class TestPartitionByClass:
    def test_counts(self):
        anchor = Example([0.0], 3, 100)
        pool = examples([[1.0], [2.0], [3.0]], [3, 3, 5])
        part = partition_by_class(anchor, pool)
        assert len(part.neighbors) == 2 and len(part.non_neighbors) == 1

    def test_empty_pool(self):
        part = partition_by_class(Example([0.0], 1, 0), [])
        assert part.neighbors == () and part.non_neighbors == ()

    def test_anchor_excluded_by_id(self):
        pool = examples([[0.0], [1.0], [2.0]], [1, 1, 2])
        part = partition_by_class(pool[0], pool)
        assert pool[0].id not in {e.id for e in part.members}
        assert len(part.members) == 2

    def test_missing_label(self):
        with pytest.raises(LabelingError):
            partition_by_class(Example([0.0], 1, 0), examples([[1.0]], [None]))

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=30), st.randoms())
    @settings(max_examples=50, deadline=None)
    def test_order_invariant(self, labels, rnd):
        pool = examples(np.zeros((len(labels), 1)), labels, start_id=1)
        anchor = Example([0.0], labels[0], 0)
        shuffled = list(pool)
        rnd.shuffle(shuffled)
        a, b = partition_by_class(anchor, pool), partition_by_class(anchor, shuffled)
        assert {e.id for e in a.neighbors} == {e.id for e in b.neighbors}
        assert len(a.members) == len(pool)


class TestPartitionByDistance:
    def test_five_percent_of_hundred(self, rng):
        anchor = Example(np.zeros(3), None, -1)
        pool = examples(rng.standard_normal((100, 3)))
        part = partition_by_distance(anchor, pool, 0.05)
        assert len(part.neighbors) == 5
        d = sorted(np.linalg.norm(e.features) for e in pool)
        assert max(np.linalg.norm(e.features) for e in part.neighbors) == d[4]

    def test_high_percentile(self, rng):
        pool = examples(rng.standard_normal((100, 2)))
        part = partition_by_distance(Example(np.zeros(2), None, -1), pool, 0.999)
        assert len(part.non_neighbors) <= 1

    def test_identical_pool(self):
        pool = examples(np.ones((10, 2)))
        part = partition_by_distance(Example(np.ones(2), None, -1), pool, 0.05)
        assert len(part.neighbors) == 10

    def test_empty_pool(self):
        with pytest.raises(DomainError):
            partition_by_distance(Example([0.0], None, 0), [], 0.05)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
    def test_percentile_domain(self, p):
        with pytest.raises(DomainError):
            partition_by_distance(Example([0.0], None, 0), examples([[1.0]], start_id=1), p)

    def test_order_invariant(self, rng):
        pool = examples(rng.standard_normal((50, 3)), start_id=1)
        anchor = Example(np.zeros(3), None, 0)
        a = partition_by_distance(anchor, pool, 0.1)
        b = partition_by_distance(anchor, pool[::-1], 0.1)
        assert {e.id for e in a.neighbors} == {e.id for e in b.neighbors}
        assert len(a.members) == 50

    def test_nearest_rank(self):
        assert nearest_rank_threshold(np.array([4.0, 1.0, 3.0, 2.0]), 0.5) == 2.0
        assert nearest_rank_threshold(np.array([4.0, 1.0, 3.0, 2.0]), 0.01) == 1.0


class TestLabelingRules:
    def test_class_mask(self):
        m = ClassLabeling().neighbor_mask(None, np.array([0, 1]), None, np.array([0, 0, 1]))
        np.testing.assert_array_equal(m, [[True, True, False], [False, False, True]])

    def test_percentile_mask_matches_partition(self, rng):
        X = rng.standard_normal((40, 3))
        pool = examples(X, start_id=0)
        exclude = np.eye(40, dtype=bool)
        mask = PercentileLabeling(0.1).neighbor_mask(X, None, X, None, exclude=exclude)
        for i in (0, 7, 39):
            part = partition_by_distance(pool[i], pool, 0.1)
            assert set(np.flatnonzero(mask[i])) == {e.id for e in part.neighbors}

    def test_parse(self):
        assert parse_labeling("class") == ClassLabeling()
        assert parse_labeling("percentile 0.05") == PercentileLabeling(0.05)
        for bad in ("knn 5", "percentile", "percentile x", "percentile 2"):
            with pytest.raises(DomainError):
                parse_labeling(bad)
