"""Differentiable histogram binning of Hamming distances and mutual information.

All entropies are measured in bits. Distances are soft-assigned to ``K + 1``
bins centred at ``v_k = k * b / K`` with a triangular kernel, which makes the
neighbor/non-neighbor distance histograms piecewise linear in the codes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr

from .core import NeighborPartition
from .errors import DomainError
from .hashing import HashMapping, hamming_matrix

LN2 = np.log(2.0)
_SUM_TOL = 1e-9


@dataclass(frozen=True)
class BinningConfig:
    """Histogram layout for distances in ``[0, b]``; ``K`` defaults to ``b``."""

    b: int
    K: int | None = None

    def __post_init__(self):
        if self.b < 1:
            raise DomainError(f"code length must be positive, got {self.b}")
        if self.K is None:
            object.__setattr__(self, "K", self.b)
        if self.K < 1:
            raise DomainError(f"bin count K must be >= 1, got {self.K}")

    @property
    def delta(self) -> float:
        return self.b / self.K

    @property
    def n_bins(self) -> int:
        return self.K + 1

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.delta


@dataclass(frozen=True)
class HistogramPair:
    p_plus: np.ndarray
    p_minus: np.ndarray
    prior_plus: float
    prior_minus: float

    def validate(self) -> None:
        pp = np.asarray(self.p_plus, dtype=np.float64)
        pm = np.asarray(self.p_minus, dtype=np.float64)
        if pp.ndim != 1 or pp.shape != pm.shape:
            raise DomainError("histograms must be 1-D arrays of equal length")
        if np.any(pp < 0) or np.any(pm < 0) or not (np.all(np.isfinite(pp)) and np.all(np.isfinite(pm))):
            raise DomainError("histogram entries must be finite and non-negative")
        if self.prior_plus < 0 or self.prior_minus < 0:
            raise DomainError("class priors must be non-negative")
        if abs(self.prior_plus + self.prior_minus - 1.0) > _SUM_TOL:
            raise DomainError("class priors must sum to 1")
        for p, prior, name in ((pp, self.prior_plus, "p_plus"), (pm, self.prior_minus, "p_minus")):
            total = p.sum()
            if prior > 0 and abs(total - 1.0) > _SUM_TOL:
                raise DomainError(f"{name} must sum to 1, sums to {total}")
            if prior == 0 and total != 0 and abs(total - 1.0) > _SUM_TOL:
                raise DomainError(f"{name} must be empty or normalized")

    @property
    def marginal(self) -> np.ndarray:
        return self.prior_plus * np.asarray(self.p_plus) + self.prior_minus * np.asarray(self.p_minus)


@dataclass
class MIGradients:
    """Gradients of the mutual information w.r.t. the anchor and member codes."""

    d_anchor: np.ndarray
    d_members: dict = field(default_factory=dict)

    def __neg__(self) -> "MIGradients":
        return MIGradients(-self.d_anchor, {k: -v for k, v in self.d_members.items()})


def _check_dist(dist, cfg: BinningConfig) -> None:
    d = np.asarray(dist)
    if np.any(d < 0) or np.any(d > cfg.b) or np.any(np.isnan(d)):
        raise DomainError(f"distance outside [0, {cfg.b}]")


def bin_weight(dist: float, k: int, cfg: BinningConfig) -> float:
    """Triangular-kernel contribution of a distance to bin ``k``."""
    _check_dist(dist, cfg)
    if not 0 <= k <= cfg.K:
        raise DomainError(f"bin index {k} outside [0, {cfg.K}]")
    v = k * cfg.delta
    if v - cfg.delta <= dist <= v:
        return (dist - (v - cfg.delta)) / cfg.delta
    if v <= dist <= v + cfg.delta:
        return (v + cfg.delta - dist) / cfg.delta
    return 0.0


def bin_weight_grad(dist: float, k: int, cfg: BinningConfig) -> float:
    """Right derivative of :func:`bin_weight` with respect to the distance.

    At a bin center the bin's own index gets ``-1/delta`` and the next bin
    ``+1/delta``; the kernel of the last bin is treated as extending past ``b``.
    """
    _check_dist(dist, cfg)
    if not 0 <= k <= cfg.K:
        raise DomainError(f"bin index {k} outside [0, {cfg.K}]")
    j = int(np.floor(dist / cfg.delta))
    if k == j:
        return -1.0 / cfg.delta
    if k == j + 1:
        return 1.0 / cfg.delta
    return 0.0


def _bin_index(dist: np.ndarray, cfg: BinningConfig):
    t = np.asarray(dist, dtype=np.float64) / cfg.delta
    lo = np.floor(t)
    j = np.clip(lo, 0, cfg.K - 1).astype(np.int64)
    return j, t - j, lo.astype(np.int64)


def soft_histograms(dist: np.ndarray, weights: np.ndarray, cfg: BinningConfig) -> np.ndarray:
    """Row-wise weighted triangular-kernel histograms.

    ``dist`` and ``weights`` have shape ``(m, n)``; returns ``(m, K + 1)``.
    Each row is ``sum_j weights[i, j] * delta(dist[i, j], k)``.
    """
    dist = np.atleast_2d(dist)
    weights = np.broadcast_to(weights, dist.shape)
    m = dist.shape[0]
    j, frac, _ = _bin_index(dist, cfg)
    base = (np.arange(m) * cfg.n_bins)[:, None]
    size = m * cfg.n_bins
    h = np.bincount((base + j).ravel(), (weights * (1.0 - frac)).ravel(), minlength=size)
    h += np.bincount((base + j + 1).ravel(), (weights * frac).ravel(), minlength=size)
    return h.reshape(m, cfg.n_bins)


def _entropy_bits(p: np.ndarray) -> np.ndarray:
    return entr(p).sum(axis=-1) / LN2


def _mi_rows(p_plus: np.ndarray, p_minus: np.ndarray, prior_plus: np.ndarray) -> np.ndarray:
    prior_minus = 1.0 - prior_plus
    p_d = prior_plus[:, None] * p_plus + prior_minus[:, None] * p_minus
    mi = _entropy_bits(p_d) - prior_plus * _entropy_bits(p_plus) - prior_minus * _entropy_bits(p_minus)
    degenerate = (prior_plus <= 0) | (prior_minus <= 0)
    # entropy of a mixture is never below the mixed entropies; clip rounding noise
    return np.where(degenerate, 0.0, np.maximum(mi, 0.0))


def _log_ratio(p: np.ndarray, p_d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = np.log2(p[nz]) - np.log2(p_d[nz])
    return out


def mutual_information(h: HistogramPair) -> float:
    """I(D; C) = H(p_D) - p+ H(p+) - p- H(p-), in bits; 0 if a prior is 0."""
    h.validate()
    return float(
        _mi_rows(
            np.asarray(h.p_plus, dtype=np.float64)[None, :],
            np.asarray(h.p_minus, dtype=np.float64)[None, :],
            np.array([h.prior_plus], dtype=np.float64),
        )[0]
    )


def mi_grad_wrt_hist(h: HistogramPair) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of the MI w.r.t. each entry of p_plus and p_minus."""
    pp = np.asarray(h.p_plus, dtype=np.float64)
    pm = np.asarray(h.p_minus, dtype=np.float64)
    p_d = h.prior_plus * pp + h.prior_minus * pm
    return h.prior_plus * _log_ratio(pp, p_d), h.prior_minus * _log_ratio(pm, p_d)


def mi_terms(
    dist: np.ndarray,
    pos: np.ndarray,
    valid: np.ndarray,
    cfg: BinningConfig,
    grad: bool = True,
):
    """Batched MI and its derivative w.r.t. every anchor-member distance.

    Args:
        dist: ``(m, n)`` distances from ``m`` anchors to ``n`` members.
        pos: ``(m, n)`` neighbor indicator.
        valid: ``(m, n)`` mask of pairs that belong to the anchor's pool.
        cfg: binning layout.
        grad: also return ``dI/d dist``.

    Returns:
        ``mi`` of shape ``(m,)`` and, if requested, ``dmi`` of shape ``(m, n)``
        (zero on invalid pairs and on anchors with an empty class).
    """
    dist = np.atleast_2d(dist)
    pos = np.atleast_2d(pos) & valid
    neg = np.atleast_2d(valid) & ~pos
    n_pos = pos.sum(axis=1)
    n_neg = neg.sum(axis=1)
    inv_pos = np.divide(1.0, n_pos, out=np.zeros(n_pos.shape), where=n_pos > 0)
    inv_neg = np.divide(1.0, n_neg, out=np.zeros(n_neg.shape), where=n_neg > 0)
    safe = np.where(valid, dist, 0.0)
    p_plus = soft_histograms(safe, pos * inv_pos[:, None], cfg)
    p_minus = soft_histograms(safe, neg * inv_neg[:, None], cfg)
    total = n_pos + n_neg
    prior_plus = np.divide(n_pos, total, out=np.zeros(n_pos.shape), where=total > 0)
    mi = _mi_rows(p_plus, p_minus, prior_plus)
    if not grad:
        return mi
    prior_minus = np.where(total > 0, 1.0 - prior_plus, 0.0)
    p_d = prior_plus[:, None] * p_plus + prior_minus[:, None] * p_minus
    g_plus = prior_plus[:, None] * _log_ratio(p_plus, p_d)
    g_minus = prior_minus[:, None] * _log_ratio(p_minus, p_d)
    live = (n_pos > 0) & (n_neg > 0)
    g_plus[~live] = 0.0
    g_minus[~live] = 0.0
    # slope of the anchor's histogram term w.r.t. one distance: (g[j+1] - g[j]) / delta
    _, _, lo = _bin_index(safe, cfg)
    rows = np.arange(dist.shape[0])[:, None]
    pad = np.zeros((dist.shape[0], 2))
    gp = np.concatenate([g_plus, pad], axis=1)
    gm = np.concatenate([g_minus, pad], axis=1)
    lo = np.clip(lo, 0, cfg.K)
    slope_p = (gp[rows, lo + 1] - gp[rows, lo]) / cfg.delta
    slope_m = (gm[rows, lo + 1] - gm[rows, lo]) / cfg.delta
    dmi = np.where(pos, slope_p * inv_pos[:, None], 0.0) + np.where(neg, slope_m * inv_neg[:, None], 0.0)
    return mi, dmi


def integer_counts(dist: np.ndarray, pos: np.ndarray, valid: np.ndarray, cfg: BinningConfig):
    """Per-anchor neighbor / non-neighbor counts of integer distances, ``K == b``.

    Every distance then sits on a bin center, so the triangular kernel puts
    all its weight on one bin. Returns two ``(m, K + 1)`` integer arrays.
    """
    if cfg.K != cfg.b:
        raise DomainError("integer histograms need one bin per distance value (K == b)")
    m = dist.shape[0]
    key = (np.arange(m)[:, None] * 2 + (pos & valid)) * cfg.n_bins + dist
    c = np.bincount(key[valid], minlength=2 * m * cfg.n_bins).reshape(m, 2, cfg.n_bins)
    return c[:, 1], c[:, 0]


def integer_histograms(dist: np.ndarray, pos: np.ndarray, valid: np.ndarray, cfg: BinningConfig):
    """Normalized :func:`integer_counts`: ``(p_plus, p_minus, prior_plus)``."""
    c_plus, c_minus = integer_counts(dist, pos, valid, cfg)
    n_pos = c_plus.sum(axis=1)
    n_neg = c_minus.sum(axis=1)
    total = n_pos + n_neg
    prior = np.divide(n_pos, total, out=np.zeros(dist.shape[0]), where=total > 0)
    return c_plus / np.maximum(n_pos, 1)[:, None], c_minus / np.maximum(n_neg, 1)[:, None], prior


def _xlog2x(n: int) -> np.ndarray:
    c = np.arange(n + 1, dtype=np.float64)
    out = np.zeros(n + 1)
    out[1:] = c[1:] * np.log2(c[1:])
    return out


def mi_from_counts(c_plus: np.ndarray, c_minus: np.ndarray) -> np.ndarray:
    """Row-wise MI in bits from integer class-conditional bin counts.

    With ``N = n+ + n-`` and ``f(x) = x log2 x`` the entropies collapse to
    ``N I = f(N) - f(n+) - f(n-) - sum f(c+ + c-) + sum f(c+) + sum f(c-)``,
    so only table lookups of integer counts are needed.
    """
    n_pos = c_plus.sum(axis=1)
    n_neg = c_minus.sum(axis=1)
    total = n_pos + n_neg
    f = _xlog2x(int(total.max(initial=0)))
    num = (f[total] - f[n_pos] - f[n_neg] - f[c_plus + c_minus].sum(axis=1)
           + f[c_plus].sum(axis=1) + f[c_minus].sum(axis=1))
    mi = np.divide(num, total, out=np.zeros(total.shape), where=total > 0)
    live = (n_pos > 0) & (n_neg > 0)
    return np.where(live, np.maximum(mi, 0.0), 0.0)


def mi_integer_distances(dist: np.ndarray, pos: np.ndarray, valid: np.ndarray, cfg: BinningConfig) -> np.ndarray:
    """Per-anchor MI of integer Hamming distances.

    Uses exact bin counts when ``K == b`` and falls back to the general soft
    binning otherwise; both give the same values up to rounding.
    """
    if cfg.K != cfg.b:
        return mi_terms(dist.astype(np.float64), pos, valid, cfg, grad=False)
    return mi_from_counts(*integer_counts(dist, pos, valid, cfg))


def relaxed_distances(anchor_codes: np.ndarray, member_codes: np.ndarray) -> np.ndarray:
    """``(m, n)`` matrix of 0.5 * (b - <r_i, r_j>), clipped into ``[0, b]``."""
    b = anchor_codes.shape[-1]
    return np.clip(0.5 * (b - anchor_codes @ member_codes.T), 0.0, float(b))


def mi_and_grad_from_codes(
    anchor_code: np.ndarray, member_codes: np.ndarray, is_neighbor: np.ndarray, cfg: BinningConfig
):
    """MI of one anchor against real-valued member codes, with code gradients.

    Returns ``(mi, d_anchor, d_members)`` where ``d_members`` has the shape of
    ``member_codes``.
    """
    anchor_code = np.asarray(anchor_code, dtype=np.float64)
    member_codes = np.atleast_2d(np.asarray(member_codes, dtype=np.float64))
    is_neighbor = np.asarray(is_neighbor, dtype=bool)
    dist = relaxed_distances(anchor_code[None, :], member_codes)
    valid = np.ones_like(dist, dtype=bool)
    mi, dmi = mi_terms(dist, is_neighbor[None, :], valid, cfg)
    s = dmi[0]
    d_anchor = -0.5 * (s @ member_codes)
    d_members = -0.5 * s[:, None] * anchor_code[None, :]
    return float(mi[0]), d_anchor, d_members


def _partition_arrays(part: NeighborPartition, m: HashMapping, relaxed: bool):
    members = part.members
    if not members:
        raise DomainError("partition has neither neighbors nor non-neighbors")
    X = np.stack([ex.features for ex in members])
    x = part.anchor.features[None, :]
    is_pos = np.zeros(len(members), dtype=bool)
    is_pos[: len(part.neighbors)] = True
    if relaxed:
        return m.relaxed_codes(x)[0], m.relaxed_codes(X), is_pos
    return m.packed_codes(x)[0], m.packed_codes(X), is_pos


def estimate_histograms(
    part: NeighborPartition, m: HashMapping, cfg: BinningConfig, relaxed: bool = False
) -> HistogramPair:
    """Neighbor and non-neighbor distance histograms of one anchor."""
    if cfg.b != m.b:
        raise DomainError(f"binning is for {cfg.b}-bit codes but mapping has {m.b} bits")
    anchor, members, is_pos = _partition_arrays(part, m, relaxed)
    if relaxed:
        dist = relaxed_distances(anchor[None, :], members)[0]
    else:
        dist = hamming_matrix(anchor[None, :], members)[0].astype(np.float64)
    return histograms_from_distances(dist, is_pos, cfg)


def histograms_from_distances(dist, is_neighbor, cfg: BinningConfig) -> HistogramPair:
    dist = np.asarray(dist, dtype=np.float64)
    is_neighbor = np.asarray(is_neighbor, dtype=bool)
    if dist.size == 0:
        raise DomainError("partition has neither neighbors nor non-neighbors")
    _check_dist(dist, cfg)
    n_pos = int(is_neighbor.sum())
    n_neg = dist.size - n_pos
    w = np.where(is_neighbor, 1.0 / max(n_pos, 1), 0.0)
    p_plus = soft_histograms(dist[None, :], w[None, :], cfg)[0]
    w = np.where(is_neighbor, 0.0, 1.0 / max(n_neg, 1))
    p_minus = soft_histograms(dist[None, :], w[None, :], cfg)[0]
    return HistogramPair(p_plus, p_minus, n_pos / dist.size, n_neg / dist.size)


def mi_grad_wrt_codes(part: NeighborPartition, m: HashMapping, cfg: BinningConfig) -> MIGradients:
    """Gradient of the relaxed MI w.r.t. the anchor code and every member code."""
    if cfg.b != m.b:
        raise DomainError(f"binning is for {cfg.b}-bit codes but mapping has {m.b} bits")
    anchor, members, is_pos = _partition_arrays(part, m, relaxed=True)
    _, d_anchor, d_members = mi_and_grad_from_codes(anchor, members, is_pos, cfg)
    ids = [ex.id for ex in part.members]
    return MIGradients(d_anchor, dict(zip(ids, d_members)))


def mi_loss_and_grad(part: NeighborPartition, m: HashMapping, cfg: BinningConfig):
    """Loss ``-I`` on relaxed codes and its gradients w.r.t. the codes."""
    if cfg.b != m.b:
        raise DomainError(f"binning is for {cfg.b}-bit codes but mapping has {m.b} bits")
    anchor, members, is_pos = _partition_arrays(part, m, relaxed=True)
    mi, d_anchor, d_members = mi_and_grad_from_codes(anchor, members, is_pos, cfg)
    ids = [ex.id for ex in part.members]
    return -mi, -MIGradients(d_anchor, dict(zip(ids, d_members)))
