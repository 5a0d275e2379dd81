"""Shared helpers and naive reference implementations for the test suite."""

import math

import numpy as np
import pytest

from mistream.core import Dataset, Example


def examples(features, labels=None, start_id=0):
    features = np.atleast_2d(np.asarray(features, dtype=float))
    labels = [None] * len(features) if labels is None else labels
    return [Example(f, lab, start_id + i) for i, (f, lab) in enumerate(zip(features, labels))]


def naive_hamming(s1, s2):
    """Count of coordinates where two sign vectors differ."""
    return sum(1 for a, b in zip(s1, s2) if a != b)


def naive_entropy(p):
    return -sum(x * math.log2(x) for x in p if x > 0)


def naive_mi(p_plus, p_minus, prior_plus):
    prior_minus = 1.0 - prior_plus
    if prior_plus == 0 or prior_minus == 0:
        return 0.0
    p_d = [prior_plus * a + prior_minus * b for a, b in zip(p_plus, p_minus)]
    return naive_entropy(p_d) - prior_plus * naive_entropy(p_plus) - prior_minus * naive_entropy(p_minus)


def naive_ap(relevance):
    hits, total = 0, 0.0
    for rank, r in enumerate(relevance, start=1):
        if r:
            hits += 1
            total += hits / rank
    return total / hits if hits else 0.0


def brute_mean_ap(qX, qy, rX, ry, rids, W):
    """Naive per-bit Hamming ranking with id tie-break and naive AP."""
    qs = [[1 if v >= 0 else -1 for v in row] for row in qX @ W]
    rs = [[1 if v >= 0 else -1 for v in row] for row in rX @ W]
    aps = []
    for i in range(len(qX)):
        order = sorted(range(len(rX)), key=lambda j: (naive_hamming(qs[i], rs[j]), rids[j]))
        aps.append(naive_ap([ry[j] == qy[i] for j in order]))
    return sum(aps) / len(aps)


def random_histogram(rng, n, sparsity=0.3):
    p = rng.random(n) * (rng.random(n) > sparsity)
    if p.sum() == 0:
        p[rng.integers(n)] = 1.0
    return p / p.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_class_data():
    """Small separable two-class set in 4 dimensions."""
    g = np.random.default_rng(7)
    centers = np.array([[2.0, 0, 0, 0], [-2.0, 0, 0, 0]])
    labels = np.arange(60) % 2
    X = centers[labels] + 0.3 * g.standard_normal((60, 4))
    return Dataset(X, labels)


# (criterion, passed, detail) rows recorded by the acceptance suite
ACCEPTANCE = []


def record_acceptance(number, passed, detail):
    ACCEPTANCE.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
