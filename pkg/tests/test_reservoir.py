import math

import numpy as np
import pytest

from conftest import naive_mi
from mistream.core import Dataset, Example, PercentileLabeling
from mistream.errors import DomainError
from mistream.hashing import HashMapping, pack_signs
from mistream.mi import BinningConfig
from mistream.reservoir import Reservoir, quality


def stream(n, d=2, labels=True):
    X = np.arange(n * d, dtype=float).reshape(n, d)
    return Dataset(X, np.arange(n) % 2 if labels else None)


class TestObserve:
    def test_fill_phase(self):
        r = Reservoir(5, seed=0)
        for ex in stream(5):
            r.observe(ex)
        assert len(r) == 5 and r.seen == 5
        np.testing.assert_array_equal(np.sort(r.ids), np.arange(5))

    def test_size_bounded(self):
        r = Reservoir(7, seed=1)
        for i, ex in enumerate(stream(100)):
            r.observe(ex)
            assert len(r) == min(i + 1, 7)

    def test_deterministic(self):
        a, b = Reservoir(10, seed=3), Reservoir(10, seed=3)
        for ex in stream(300):
            a.observe(ex)
            b.observe(ex)
        np.testing.assert_array_equal(a.ids, b.ids)

    def test_bulk_matches_sequential(self):
        a, b = Reservoir(10, seed=11), Reservoir(10, seed=11)
        data = stream(500)
        for ex in data:
            a.observe(ex)
        b.observe_many(data.subset(np.arange(3)))
        b.observe_many(data.subset(np.arange(3, 500)))
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_capacity_one_frequency(self):
        # item i of a t-stream survives with probability 1/t
        t, trials = 8, 100_000
        counts = np.zeros(t)
        data = stream(t, 1)
        g = np.random.default_rng(5)
        for _ in range(trials):
            r = Reservoir(1, seed=g)
            r.observe_many(data)
            counts[r.ids[0]] += 1
        sigma = math.sqrt(trials * (1 / t) * (1 - 1 / t))
        assert np.all(np.abs(counts - trials / t) <= 3 * sigma)

    def test_unlabeled_items(self):
        r = Reservoir(3, seed=0)
        r.observe(Example([1.0], None, 0))
        assert r.labels is None
        assert r.snapshot().labels is None

    def test_dim_mismatch(self):
        r = Reservoir(3, dim=2)
        with pytest.raises(DomainError):
            r.observe(Example([1.0]))

    def test_bad_capacity(self):
        with pytest.raises(DomainError):
            Reservoir(0)


def brute_quality(X, y, m, cfg):
    codes = np.where(X @ m.W >= 0, 1, -1)
    total = 0.0
    for i in range(len(X)):
        d = [int((codes[i] != codes[j]).sum()) for j in range(len(X)) if j != i]
        pos = [y[j] == y[i] for j in range(len(X)) if j != i]
        n_pos = sum(pos)
        n_neg = len(pos) - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        pp = np.bincount([dv for dv, p in zip(d, pos) if p], minlength=cfg.b + 1) / n_pos
        pm = np.bincount([dv for dv, p in zip(d, pos) if not p], minlength=cfg.b + 1) / n_neg
        total += naive_mi(pp, pm, n_pos / len(pos))
    return total / len(X)


class TestQuality:
    def test_single_class_is_zero(self, rng):
        data = Dataset(rng.standard_normal((20, 3)), np.zeros(20, int))
        assert quality(data, HashMapping(rng.standard_normal((3, 8)))) == 0.0

    def test_perfect_separation_is_one_bit(self):
        # class 0 codes all-plus, class 1 all-minus: distance 0 within, 8 across
        X = np.vstack([np.ones((10, 1)), -np.ones((10, 1))])
        data = Dataset(X, np.repeat([0, 1], 10))
        m = HashMapping(np.ones((1, 8)))
        # each anchor sees 9 neighbors and 10 non-neighbors; I = H(9/19)
        h = naive_mi([1, 0], [0, 1], 9 / 19)
        assert quality(data, m) == pytest.approx(h, abs=1e-12)
        assert h == pytest.approx(1.0, abs=3e-3)

    def test_balanced_leave_one_out_limit(self):
        # with many items per class the one-bit limit is approached
        X = np.vstack([np.ones((500, 1)), -np.ones((500, 1))])
        q = quality(Dataset(X, np.repeat([0, 1], 500)), HashMapping(np.ones((1, 8))))
        assert q == pytest.approx(1.0, abs=1e-5)

    def test_matches_brute_force(self, rng):
        X = rng.standard_normal((60, 5))
        y = rng.integers(0, 3, 60)
        m = HashMapping(rng.standard_normal((5, 12)))
        q = quality(Dataset(X, y), m, block_pairs=7 * len(X))
        assert q == pytest.approx(brute_quality(X, y, m, BinningConfig(12)), abs=1e-12)

    def test_order_invariant(self, rng):
        X = rng.standard_normal((40, 4))
        y = rng.integers(0, 2, 40)
        m = HashMapping(rng.standard_normal((4, 8)))
        perm = rng.permutation(40)
        a = quality(Dataset(X, y), m)
        b = quality(Dataset(X[perm], y[perm]), m)
        assert a == pytest.approx(b, abs=1e-12)

    def test_bounds(self, rng):
        for _ in range(20):
            X = rng.standard_normal((30, 4))
            y = rng.integers(0, 2, 30)
            q = quality(Dataset(X, y), HashMapping(rng.standard_normal((4, 6))))
            assert 0.0 <= q <= math.log2(7)

    def test_percentile_labeling_on_unlabeled(self, rng):
        data = Dataset(rng.standard_normal((50, 3)))
        q = quality(data, HashMapping(rng.standard_normal((3, 8))), labeling=PercentileLabeling(0.1))
        assert q > 0

    def test_reservoir_input(self, rng):
        r = Reservoir(30, seed=0)
        data = Dataset(rng.standard_normal((100, 3)), rng.integers(0, 2, 100))
        r.observe_many(data)
        m = HashMapping(rng.standard_normal((3, 8)))
        assert quality(r, m) == quality(r.snapshot(), m)

    def test_too_small(self):
        with pytest.raises(DomainError):
            quality(Dataset(np.zeros((1, 2)), [0]), HashMapping(np.ones((2, 4))))

    def test_binary_codes_used(self, rng):
        # scaling W leaves binary codes, and so quality, unchanged
        data = Dataset(rng.standard_normal((30, 3)), rng.integers(0, 2, 30))
        W = rng.standard_normal((3, 8))
        assert quality(data, HashMapping(W)) == quality(data, HashMapping(5 * W, A=1.0))
