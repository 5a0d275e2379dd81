"""Retrieval metrics, streaming AUC and the MI/metric correlation study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassLabeling, Dataset
from .errors import DomainError
from .hashing import HashMapping, HashTable, hamming_matrix
from .mi import BinningConfig, integer_histograms, mi_integer_distances, soft_histograms

N_CHECKPOINTS = 50


@dataclass(frozen=True)
class RankedList:
    """Retrieval ids sorted by ascending distance (ties by ascending id)."""

    ids: np.ndarray
    relevance: np.ndarray

    @classmethod
    def from_distances(cls, ids, distances, relevance) -> "RankedList":
        ids = np.asarray(ids)
        order = np.lexsort((ids, np.asarray(distances)))
        return cls(ids[order], np.asarray(relevance, dtype=bool)[order])


def _relevance(rl) -> np.ndarray:
    return np.asarray(rl.relevance if isinstance(rl, RankedList) else rl, dtype=bool)


def average_precision(rl, cutoff: int | None = None) -> float:
    """Mean precision at the relevant ranks within the cutoff.

    The denominator is ``min(#relevant, cutoff)`` so AP@k never exceeds 1.
    """
    rel = _relevance(rl)
    n_rel = int(rel.sum())
    if n_rel == 0:
        return 0.0
    top = rel if cutoff is None else rel[:cutoff]
    ranks = np.flatnonzero(top) + 1
    if ranks.size == 0:
        return 0.0
    precision = np.arange(1, ranks.size + 1) / ranks
    denom = n_rel if cutoff is None else min(n_rel, cutoff)
    return float(precision.sum() / denom)


def dcg(rl, cutoff: int | None = None) -> float:
    rel = _relevance(rl)[:cutoff].astype(np.float64)
    return float((rel / np.log2(np.arange(2, rel.size + 2))).sum())


def ndcg(rl, cutoff: int | None = None) -> float:
    rel = _relevance(rl)
    ideal = dcg(np.sort(rel)[::-1], cutoff)
    return 0.0 if ideal == 0 else dcg(rel, cutoff) / ideal


def _ranked_relevance(dist: np.ndarray, ids: np.ndarray, relevance: np.ndarray) -> np.ndarray:
    """Row-wise relevance after sorting by (distance, id)."""
    id_rank = np.empty(ids.shape[0], dtype=np.int64)
    id_rank[np.argsort(ids, kind="stable")] = np.arange(ids.shape[0])
    key = dist.astype(np.int64) * ids.shape[0] + id_rank[None, :]
    order = np.argsort(key, axis=1, kind="stable")
    return np.take_along_axis(relevance, order, axis=1)


def _ap_rows(rel: np.ndarray, cutoff: int | None) -> np.ndarray:
    n_rel = rel.sum(axis=1)
    top = rel if cutoff is None else rel[:, :cutoff]
    hits = np.cumsum(top, axis=1)
    prec = np.where(top, hits / np.arange(1, top.shape[1] + 1), 0.0)
    denom = n_rel if cutoff is None else np.minimum(n_rel, cutoff)
    return np.divide(prec.sum(axis=1), denom, out=np.zeros(rel.shape[0]), where=denom > 0)


def _dcg_rows(rel: np.ndarray, cutoff: int | None) -> np.ndarray:
    top = rel[:, :cutoff].astype(np.float64)
    return (top / np.log2(np.arange(2, top.shape[1] + 2))).sum(axis=1)


def relevance_matrix(queries: Dataset, retrieval_set: Dataset, labeling=None) -> np.ndarray:
    labeling = labeling or ClassLabeling()
    exclude = queries.ids[:, None] == retrieval_set.ids[None, :]
    return labeling.neighbor_mask(
        queries.features, queries.labels, retrieval_set.features, retrieval_set.labels, exclude=exclude
    ) & ~exclude


class RetrievalBenchmark:
    """Fixed queries and retrieval set with precomputed relevance."""

    def __init__(self, queries: Dataset, retrieval_set: Dataset, labeling=None, cutoff: int | None = None):
        if len(retrieval_set) == 0:
            raise DomainError("retrieval set is empty")
        self.queries = queries
        self.retrieval_set = retrieval_set
        self.cutoff = cutoff
        self.relevance = relevance_matrix(queries, retrieval_set, labeling)

    def per_query_ap(self, table: HashTable, mapping: HashMapping) -> np.ndarray:
        if len(table) == 0:
            raise DomainError("hash table is empty")
        if not np.array_equal(table.ids, self.retrieval_set.ids):
            raise DomainError("table ids do not match the benchmark's retrieval set")
        dist = hamming_matrix(mapping.packed_codes(self.queries.features), table.codes)
        rel = _ranked_relevance(dist, table.ids, self.relevance)
        return _ap_rows(rel, self.cutoff)

    def mean_ap(self, table: HashTable, mapping: HashMapping) -> float:
        return float(self.per_query_ap(table, mapping).mean())


def mean_ap(queries: Dataset, table: HashTable, mapping: HashMapping, retrieval_set: Dataset,
            labeling=None, cutoff: int | None = None) -> float:
    """mAP of Hamming ranking against ``table``; queries are hashed with ``mapping``."""
    if len(table) == 0:
        raise DomainError("hash table is empty")
    return RetrievalBenchmark(queries, retrieval_set, labeling, cutoff).mean_ap(table, mapping)


def auc_over_checkpoints(curve) -> float:
    """Trapezoidal area under a (position, mAP) curve divided by its position span."""
    pts = np.asarray(curve, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DomainError("AUC needs at least two checkpoints")
    x, y = pts[:, 0], pts[:, 1]
    span = x[-1] - x[0]
    if span <= 0:
        raise DomainError("checkpoint positions must be increasing")
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0 / span)


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise DomainError("pearson needs two equal-length samples of size >= 2")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((xc * xc).sum()), np.sqrt((yc * yc).sum())
    if sx == 0 or sy == 0:
        raise DomainError("pearson is undefined for a zero-variance sample")
    return float(np.clip((xc * yc).sum() / (sx * sy), -1.0, 1.0))


def checkpoint_schedule(stream_length: int, rng, n: int = N_CHECKPOINTS, jitter: float = 0.25) -> np.ndarray:
    """Equally spaced stream positions with small random perturbations.

    Each position moves by at most ``jitter`` of the spacing, so the order is
    preserved; the result lies in ``[1, stream_length]``.
    """
    if stream_length < n:
        raise DomainError(f"stream of {stream_length} examples cannot hold {n} checkpoints")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    spacing = stream_length / n
    base = spacing * np.arange(1, n + 1)
    pos = np.rint(base + rng.uniform(-jitter, jitter, size=n) * spacing).astype(np.int64)
    pos = np.clip(pos, 1, stream_length)
    for i in range(1, n):
        pos[i] = max(pos[i], pos[i - 1] + 1)
    return pos


def distribution_overlap(mapping: HashMapping, data: Dataset, labeling=None,
                         cfg: BinningConfig | None = None) -> float:
    """Mean over anchors of sum_k min(p+_k, p-_k) for binary-code distances.

    Every example of ``data`` is an anchor against the others. Anchors with
    an empty neighbor or non-neighbor set are left out.
    """
    labeling = labeling or ClassLabeling()
    cfg = cfg or BinningConfig(mapping.b)
    codes = mapping.packed_codes(data.features)
    dist = hamming_matrix(codes, codes)
    valid = ~np.eye(len(data), dtype=bool)
    pos = labeling.neighbor_mask(data.features, data.labels, data.features, data.labels, exclude=~valid) & valid
    if cfg.K == cfg.b:
        p_plus, p_minus, prior = integer_histograms(dist, pos, valid, cfg)
    else:
        d = dist.astype(np.float64)
        n_pos = pos.sum(axis=1, keepdims=True)
        n_neg = (valid & ~pos).sum(axis=1, keepdims=True)
        p_plus = soft_histograms(d, pos / np.maximum(n_pos, 1), cfg)
        p_minus = soft_histograms(d, (valid & ~pos) / np.maximum(n_neg, 1), cfg)
        prior = (n_pos / (n_pos + n_neg))[:, 0]
    live = (prior > 0) & (prior < 1)
    if not live.any():
        raise DomainError("no anchor has both neighbors and non-neighbors")
    return float(np.minimum(p_plus, p_minus).sum(axis=1)[live].mean())


@dataclass
class CorrelationResult:
    rows: list  # (mapping_id, mi, ap, dcg, ndcg)
    pearson_ap: float | None
    pearson_dcg: float | None
    pearson_ndcg: float | None


def correlation_study(dataset: Dataset, n_mappings: int = 50, bits: int = 16, n_queries: int = 100,
                      seed=0, labeling=None, cfg: BinningConfig | None = None) -> CorrelationResult:
    """Pair mean per-query MI with AP/DCG/NDCG over random Gaussian mappings."""
    rng = np.random.default_rng(seed)
    if n_queries < 1 or n_queries >= len(dataset):
        raise DomainError("need at least one query and a non-empty retrieval pool")
    perm = rng.permutation(len(dataset))
    queries = dataset.subset(np.sort(perm[:n_queries]))
    pool = dataset.subset(np.sort(perm[n_queries:]))
    relevance = relevance_matrix(queries, pool, labeling)
    if not relevance.any() or relevance.all():
        raise DomainError("degenerate pool: relevance is constant")
    cfg = cfg or BinningConfig(bits)
    valid = np.ones_like(relevance)
    rows = []
    for i in range(n_mappings):
        m = HashMapping(rng.standard_normal((dataset.dim, bits)))
        dist = hamming_matrix(m.packed_codes(queries.features), m.packed_codes(pool.features))
        mi = mi_integer_distances(dist, relevance, valid, cfg)
        rel = _ranked_relevance(dist, pool.ids, relevance)
        gains = _dcg_rows(rel, None)
        ideal = _dcg_rows(np.sort(relevance, axis=1)[:, ::-1], None)
        nd = np.divide(gains, ideal, out=np.zeros_like(gains), where=ideal > 0)
        rows.append((i, float(mi.mean()), float(_ap_rows(rel, None).mean()), float(gains.mean()), float(nd.mean())))
    cols = np.array([r[1:] for r in rows]).T if rows else np.zeros((4, 0))

    def corr(k):
        try:
            return pearson(cols[0], cols[k])
        except DomainError:
            return None

    return CorrelationResult(rows, corr(1), corr(2), corr(3))
