"""Gaussian-cluster synthetic datasets."""

from __future__ import annotations

import numpy as np

from .core import Dataset
from .errors import DomainError
from .seeding import substream


def gaussian_clusters(n: int, d: int, classes: int, spread: float, seed: int = 0,
                      radius: float = 1.0) -> Dataset:
    """Balanced clusters around random centers on a sphere of ``radius``.

    Points are ``center + spread * N(0, I)``; labels cycle through the
    classes and the order is shuffled. Deterministic under ``seed``.
    """
    if classes < 1 or classes > n:
        raise DomainError(f"need 1 <= classes <= n, got classes={classes}, n={n}")
    if d < 1 or spread < 0:
        raise DomainError("dimension must be positive and spread non-negative")
    rng = substream(seed, "synth")
    centers = rng.standard_normal((classes, d))
    centers *= radius / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.permutation(np.arange(n) % classes)
    X = centers[labels] + spread * rng.standard_normal((n, d))
    return Dataset(X.astype(np.float32).astype(np.float64), labels, np.arange(n))
