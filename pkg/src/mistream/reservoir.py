"""Uniform stream sampling and the reservoir estimate of hash-mapping quality."""

from __future__ import annotations

import numpy as np

from .core import ClassLabeling, Dataset, Example
from .errors import DomainError
from .hashing import HashMapping, hamming_matrix
from .mi import BinningConfig, mi_integer_distances

DEFAULT_CAPACITY = 1000


class Reservoir:
    """Fixed-capacity uniform sample of a stream (Vitter's algorithm R).

    Items are stored column-wise in preallocated arrays. Feeding a sequence
    through :meth:`observe_many` consumes the random generator exactly as the
    same sequence of :meth:`observe` calls would, so both paths produce the
    same contents for a given seed.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, dim: int | None = None, seed=None):
        if capacity < 1:
            raise DomainError(f"reservoir capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.seen = 0
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self._dim = dim
        self._feats = None if dim is None else np.empty((capacity, dim))
        self._labels = np.full(capacity, -1, dtype=np.int64)
        self._has_label = np.zeros(capacity, dtype=bool)
        self._ids = np.empty(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return min(self.seen, self.capacity)

    def _ensure(self, dim: int) -> None:
        if self._feats is None:
            self._dim = dim
            self._feats = np.empty((self.capacity, dim))
        elif dim != self._dim:
            raise DomainError(f"feature length {dim} does not match reservoir dim {self._dim}")

    def _store(self, slot: int, features, label, id_) -> None:
        self._feats[slot] = features
        self._has_label[slot] = label is not None
        self._labels[slot] = -1 if label is None else label
        self._ids[slot] = id_

    def observe(self, x: Example) -> "Reservoir":
        self._ensure(x.dim)
        self.seen += 1
        if self.seen <= self.capacity:
            self._store(self.seen - 1, x.features, x.label, x.id)
        else:
            j = int(self.rng.integers(0, self.seen))
            if j < self.capacity:
                self._store(j, x.features, x.label, x.id)
        return self

    def observe_many(self, data: Dataset) -> "Reservoir":
        n = len(data)
        if n == 0:
            return self
        self._ensure(data.dim)
        labels = data.labels
        fill = min(max(self.capacity - self.seen, 0), n)
        if fill:
            sl = slice(self.seen, self.seen + fill)
            self._feats[sl] = data.features[:fill]
            self._ids[sl] = data.ids[:fill]
            self._has_label[sl] = labels is not None
            self._labels[sl] = -1 if labels is None else labels[:fill]
        if fill < n:
            positions = np.arange(self.seen + fill + 1, self.seen + n + 1)
            slots = self.rng.integers(0, positions)
            for i in np.flatnonzero(slots < self.capacity):
                k = fill + i
                self._store(int(slots[i]), data.features[k], None if labels is None else labels[k], data.ids[k])
        self.seen += n
        return self

    @property
    def items(self) -> list:
        return list(self.snapshot())

    def snapshot(self) -> Dataset:
        """Current contents as a dataset (copies the storage)."""
        n = len(self)
        if n == 0:
            return Dataset(np.empty((0, self._dim or 0)))
        labels = self._labels[:n] if self._has_label[:n].all() else None
        return Dataset(self._feats[:n].copy(), None if labels is None else labels.copy(), self._ids[:n].copy())

    @property
    def features(self) -> np.ndarray:
        return self._feats[: len(self)]

    @property
    def labels(self) -> np.ndarray | None:
        n = len(self)
        return self._labels[:n] if n and self._has_label[:n].all() else None

    @property
    def ids(self) -> np.ndarray:
        return self._ids[: len(self)]


def quality(
    r: Reservoir | Dataset,
    m: HashMapping,
    cfg: BinningConfig | None = None,
    labeling=None,
    block_pairs: int = 1 << 15,
) -> float:
    """Mean per-anchor mutual information of binary-code distances on the reservoir.

    Each reservoir item is an anchor whose neighbors and non-neighbors are the
    other reservoir items, split by ``labeling``. Anchors with an empty side
    contribute zero. Anchors are processed in blocks of about ``block_pairs``
    anchor-member pairs so the working set does not grow with the reservoir.
    """
    cfg = cfg or BinningConfig(m.b)
    labeling = labeling or ClassLabeling()
    if cfg.b != m.b:
        raise DomainError(f"binning is for {cfg.b}-bit codes but mapping has {m.b} bits")
    X, y = r.features, r.labels
    n = X.shape[0]
    if n < 2:
        raise DomainError(f"quality needs at least 2 reservoir items, got {n}")
    codes = m.packed_codes(X)
    chunk = max(1, block_pairs // n)
    total = 0.0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        rows = np.arange(start, stop)
        valid = np.ones((stop - start, n), dtype=bool)
        valid[rows - start, rows] = False
        pos = labeling.neighbor_mask(
            X[start:stop], None if y is None else y[start:stop], X, y, exclude=~valid
        )
        dist = hamming_matrix(codes[start:stop], codes)
        total += float(mi_integer_distances(dist, pos, valid, cfg).sum())
    return total / n
