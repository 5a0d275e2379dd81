"""Domain types for examples, datasets and neighbor relations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, LabelingError


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Example:
    """A single feature vector with an optional class label and a unique id."""

    features: np.ndarray
    label: int | None = None
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features, np.float64).ravel())
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "id", int(self.id))

    @property
    def dim(self) -> int:
        return self.features.shape[0]


class Dataset:
    """Column-oriented collection of examples.

    Features are stored as an ``(n, d)`` float64 matrix so that encoding and
    distance computations stay vectorized. Labels are optional; when present
    every example carries one.
    """

    def __init__(self, features, labels=None, ids=None):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DomainError(f"features must be 2-D, got shape {features.shape}")
        n = features.shape[0]
        self.features = _frozen(features, np.float64)
        self.labels = None if labels is None else _frozen(labels, np.int64)
        if self.labels is not None and self.labels.shape != (n,):
            raise DomainError(f"expected {n} labels, got {self.labels.shape[0]}")
        if ids is None:
            ids = np.arange(n, dtype=np.int64)
        self.ids = _frozen(ids, np.int64)
        if self.ids.shape != (n,):
            raise DomainError(f"expected {n} ids, got {self.ids.shape[0]}")
        if np.unique(self.ids).size != n:
            raise DomainError("example ids must be unique within a dataset")

    @classmethod
    def from_examples(cls, examples: Sequence[Example]) -> "Dataset":
        if not examples:
            raise DomainError("cannot build a dataset from zero examples")
        dims = {ex.dim for ex in examples}
        if len(dims) != 1:
            raise DomainError(f"inconsistent feature lengths: {sorted(dims)}")
        has_label = [ex.label is not None for ex in examples]
        if any(has_label) and not all(has_label):
            raise LabelingError("either all examples carry labels or none do")
        labels = [ex.label for ex in examples] if all(has_label) else None
        return cls(np.stack([ex.features for ex in examples]), labels, [ex.id for ex in examples])

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def __getitem__(self, i: int) -> Example:
        label = None if self.labels is None else int(self.labels[i])
        return Example(self.features[i], label, int(self.ids[i]))

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.features[index], labels, self.ids[index])


@dataclass(frozen=True)
class NeighborPartition:
    """Split of a pool into neighbors and non-neighbors of an anchor."""

    anchor: Example
    neighbors: tuple = field(default_factory=tuple)
    non_neighbors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "neighbors", tuple(self.neighbors))
        object.__setattr__(self, "non_neighbors", tuple(self.non_neighbors))
        pos = {ex.id for ex in self.neighbors}
        neg = {ex.id for ex in self.non_neighbors}
        if pos & neg:
            raise DomainError("neighbor and non-neighbor sets overlap")
        if self.anchor.id in pos or self.anchor.id in neg:
            raise DomainError("anchor must not appear in its own partition")

    @property
    def members(self) -> tuple:
        return self.neighbors + self.non_neighbors


def _without_anchor(anchor: Example, pool: Sequence[Example]) -> list:
    return [ex for ex in pool if ex.id != anchor.id]


def partition_by_class(anchor: Example, pool: Sequence[Example]) -> NeighborPartition:
    """Neighbors are pool items sharing the anchor's class label."""
    if anchor.label is None or any(ex.label is None for ex in pool):
        raise LabelingError("class partition requires every example to carry a label")
    rest = _without_anchor(anchor, pool)
    pos = [ex for ex in rest if ex.label == anchor.label]
    neg = [ex for ex in rest if ex.label != anchor.label]
    return NeighborPartition(anchor, pos, neg)


def nearest_rank_threshold(distances: np.ndarray, percentile: float) -> float:
    """Nearest-rank quantile: the ceil(p*n)-th smallest distance."""
    n = distances.shape[0]
    rank = max(1, math.ceil(percentile * n))
    return float(np.partition(distances, rank - 1)[rank - 1])


def partition_by_distance(
    anchor: Example, pool: Sequence[Example], percentile: float
) -> NeighborPartition:
    """Neighbors are pool items within the per-anchor distance quantile.

    Items whose Euclidean distance equals the threshold count as neighbors.
    """
    if not 0.0 < percentile < 1.0:
        raise DomainError(f"percentile must lie in (0, 1), got {percentile}")
    rest = _without_anchor(anchor, pool)
    if not rest:
        raise DomainError("distance partition needs a non-empty pool")
    feats = np.stack([ex.features for ex in rest])
    dist = cdist(anchor.features[None, :], feats)[0]
    thr = nearest_rank_threshold(dist, percentile)
    pos = [ex for ex, dv in zip(rest, dist) if dv <= thr]
    neg = [ex for ex, dv in zip(rest, dist) if dv > thr]
    return NeighborPartition(anchor, pos, neg)


class ClassLabeling:
    """Supervised neighbor rule: same class label means neighbor."""

    name = "class"

    def neighbor_mask(self, anchor_feats, anchor_labels, pool_feats, pool_labels, exclude=None):
        """Boolean ``(m, n)`` neighbor matrix between anchors and pool rows."""
        if anchor_labels is None or pool_labels is None:
            raise LabelingError("class labeling requires labeled data")
        return np.asarray(anchor_labels)[:, None] == np.asarray(pool_labels)[None, :]

    def describe(self) -> str:
        return "class"

    def __eq__(self, other):
        return isinstance(other, ClassLabeling)

    def __repr__(self):
        return "ClassLabeling()"


class PercentileLabeling:
    """Unsupervised neighbor rule based on a per-anchor Euclidean quantile.

    ``exclude`` marks pool entries that are not part of the anchor's pool
    (typically the anchor itself); they are ignored when computing the
    threshold and are never reported as neighbors.
    """

    name = "percentile"

    def __init__(self, percentile: float = 0.05):
        if not 0.0 < percentile < 1.0:
            raise DomainError(f"percentile must lie in (0, 1), got {percentile}")
        self.percentile = float(percentile)

    def neighbor_mask(self, anchor_feats, anchor_labels, pool_feats, pool_labels, exclude=None):
        dist = cdist(np.atleast_2d(anchor_feats), np.atleast_2d(pool_feats))
        if exclude is not None:
            dist = np.where(exclude, np.inf, dist)
        n_valid = np.isfinite(dist).sum(axis=1)
        rank = np.maximum(1, np.ceil(self.percentile * n_valid).astype(np.int64))
        srt = np.sort(dist, axis=1)
        thr = srt[np.arange(dist.shape[0]), np.minimum(rank, dist.shape[1]) - 1]
        mask = dist <= thr[:, None]
        mask[n_valid == 0] = False
        return mask & np.isfinite(dist)

    def describe(self) -> str:
        return f"percentile {self.percentile:g}"

    def __eq__(self, other):
        return isinstance(other, PercentileLabeling) and other.percentile == self.percentile

    def __repr__(self):
        return f"PercentileLabeling({self.percentile!r})"


def parse_labeling(spec) -> ClassLabeling | PercentileLabeling:
    """Build a labeling rule from ``"class"`` or ``"percentile <p>"``."""
    if isinstance(spec, (ClassLabeling, PercentileLabeling)):
        return spec
    parts = str(spec).split()
    if parts == ["class"]:
        return ClassLabeling()
    if len(parts) == 2 and parts[0] == "percentile":
        try:
            return PercentileLabeling(float(parts[1]))
        except ValueError as exc:
            raise DomainError(f"bad percentile in labeling rule {spec!r}") from exc
    raise DomainError(f"unknown labeling rule {spec!r}; expected 'class' or 'percentile <p>'")
