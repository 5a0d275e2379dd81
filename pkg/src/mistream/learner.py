"""Momentum SGD on the negated mutual-information objective.

Two regimes are supported. Online training consumes a stream one example at
a time, partitioning the reservoir around each arriving example. Batch
training partitions every minibatch around each of its own members.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ClassLabeling, Dataset, NeighborPartition
from .errors import DomainError, TrainingError
from .evaluation import RetrievalBenchmark, auc_over_checkpoints, checkpoint_schedule
from .hashing import HashMapping
from .mi import BinningConfig, mi_and_grad_from_codes, mi_terms, relaxed_distances
from .reservoir import DEFAULT_CAPACITY, Reservoir, quality
from .seeding import substream
from .trigger import RefreshPolicy, TriggerUpdate, UpdateLogEntry

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    bits: int = 32
    A: float = 10.0
    learning_rate: float = 0.1
    momentum: float = 0.9
    decay_factor: float = 0.5
    decay_every: int | None = 10
    minibatch_size: int = 100
    epochs: int = 100
    seed: int = 0
    mode: str = "online"
    bins: int | None = None
    reservoir_capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if self.bits < 1:
            raise DomainError("bits must be positive")
        if not self.learning_rate >= 0:
            raise DomainError("learning rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise DomainError("momentum must lie in [0, 1)")
        if not 0 < self.decay_factor <= 1:
            raise DomainError("decay factor must lie in (0, 1]")
        if self.decay_every is not None and self.decay_every < 1:
            raise DomainError("decay_every must be positive")
        if not self.A > 0:
            raise DomainError("sigmoid sharpness A must be positive")
        if self.minibatch_size < 1 or self.epochs < 0 or self.reservoir_capacity < 1:
            raise DomainError("minibatch size, epochs and reservoir capacity must be positive")
        if self.mode not in ("online", "batch"):
            raise DomainError(f"mode must be 'online' or 'batch', got {self.mode!r}")

    @property
    def binning(self) -> BinningConfig:
        return BinningConfig(self.bits, self.bins)

    def rate_at(self, period: int) -> float:
        """Step-decayed learning rate after ``period`` epochs (or examples)."""
        if self.decay_every is None:
            return self.learning_rate
        return self.learning_rate * self.decay_factor ** (period // self.decay_every)


@dataclass
class PolicyRun:
    """Per-policy outcome of an online run."""

    name: str
    checkpoint_metrics: list = field(default_factory=list)
    update_log: list = field(default_factory=list)
    update_count: int = 0

    @property
    def auc(self) -> float:
        return auc_over_checkpoints(self.checkpoint_metrics)

    @property
    def final_map(self) -> float:
        return self.checkpoint_metrics[-1][1]


@dataclass
class TrainReport:
    loss_trace: list = field(default_factory=list)
    final_mapping: HashMapping | None = None
    policies: dict = field(default_factory=dict)
    initial_mapping: HashMapping | None = None

    def _primary(self) -> PolicyRun | None:
        return next(iter(self.policies.values()), None)

    @property
    def checkpoint_metrics(self) -> list:
        p = self._primary()
        return [] if p is None else p.checkpoint_metrics

    @property
    def update_log(self) -> list[UpdateLogEntry]:
        p = self._primary()
        return [] if p is None else p.update_log

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "loss_trace": [[int(s), float(v)] for s, v in self.loss_trace],
            "policies": {},
        }
        for name, p in self.policies.items():
            entries = []
            for e in p.update_log:
                d = {
                    "stream_position": e.stream_position,
                    "q_candidate": e.q_candidate,
                    "q_snapshot": e.q_snapshot,
                    "decision": e.decision,
                    "reason": e.reason,
                }
                if include_timing:
                    d["wall_time"] = e.wall_time
                entries.append(d)
            out["policies"][name] = {
                "update_count": p.update_count,
                "checkpoint_metrics": [[int(s), float(v)] for s, v in p.checkpoint_metrics],
                "update_log": entries,
            }
        return out


def init_mapping(d: int, cfg: TrainConfig, seed=None) -> HashMapping:
    """Random Gaussian mapping with entries of variance 1/d."""
    rng = substream(cfg.seed if seed is None else seed, "init")
    return HashMapping(rng.standard_normal((d, cfg.bits)) / math.sqrt(d), cfg.A)


def relaxed_forward(m: HashMapping, X: np.ndarray):
    """Relaxed codes of the rows of ``X`` and their derivative w.r.t. ``w_i . x``."""
    r = m.relaxed_codes(X)
    return r, 0.5 * m.A * (1.0 - r * r)


def relaxed_backward(m: HashMapping, X: np.ndarray, code_grad: np.ndarray, slope=None) -> np.ndarray:
    """Chain code gradients through 2*sigmoid(A w.x) - 1 to the weights."""
    if slope is None:
        slope = relaxed_forward(m, X)[1]
    return X.T @ (code_grad * slope)


def _check_finite(grad: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(grad)):
        bad = int((~np.isfinite(grad)).sum())
        raise TrainingError(f"non-finite gradient in {where}: {bad} of {grad.size} entries")


def apply_momentum(m: HashMapping, grad_W: np.ndarray, velocity: np.ndarray | None,
                   learning_rate: float, momentum: float):
    """v <- mu v - lr grad;  W <- W + v."""
    _check_finite(grad_W, "weight update")
    if velocity is None:
        velocity = np.zeros_like(m.W)
    velocity = momentum * velocity - learning_rate * grad_W
    return HashMapping(m.W + velocity, m.A), velocity


def anchor_loss_grad(m: HashMapping, x: np.ndarray, X: np.ndarray, is_pos: np.ndarray,
                     cfg: BinningConfig):
    """Loss ``-I`` of one anchor against member rows and its gradient w.r.t. W."""
    rows = np.vstack([x[None, :], X])
    R, slope = relaxed_forward(m, rows)
    mi, d_anchor, d_members = mi_and_grad_from_codes(R[0], R[1:], is_pos, cfg)
    return -mi, relaxed_backward(m, rows, -np.vstack([d_anchor[None, :], d_members]), slope)


def sgd_step(m: HashMapping, part: NeighborPartition, cfg: TrainConfig, velocity=None,
             learning_rate: float | None = None):
    """One momentum step on a single anchor's partition.

    Degenerate partitions (an empty side) leave the mapping untouched and
    report zero loss.
    """
    if not part.neighbors or not part.non_neighbors:
        return m, (np.zeros_like(m.W) if velocity is None else velocity), 0.0
    X = np.stack([ex.features for ex in part.members])
    is_pos = np.zeros(X.shape[0], dtype=bool)
    is_pos[: len(part.neighbors)] = True
    loss, grad = anchor_loss_grad(m, part.anchor.features, X, is_pos, cfg.binning)
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    m2, v2 = apply_momentum(m, grad, velocity, lr, cfg.momentum)
    return m2, v2, loss


def minibatch_loss_grad(m: HashMapping, X: np.ndarray, labels: np.ndarray, cfg: BinningConfig,
                        labeling=None):
    """Mean loss over live anchors of a minibatch and its gradient w.r.t. W.

    Every element is an anchor against the rest of the minibatch; its code
    gradient collects its anchor term plus every member term it appears in,
    averaged over the live anchor count. Returns ``(loss, grad, n_live)``.
    """
    labeling = labeling or ClassLabeling()
    n = X.shape[0]
    R, slope = relaxed_forward(m, X)
    dist = relaxed_distances(R, R)
    valid = ~np.eye(n, dtype=bool)
    pos = labeling.neighbor_mask(X, labels, X, labels, exclude=~valid) & valid
    n_pos = pos.sum(axis=1)
    live = (n_pos > 0) & (n_pos < n - 1)
    n_live = int(live.sum())
    if n_live == 0:
        return 0.0, np.zeros_like(m.W), 0
    mi, dmi = mi_terms(dist, pos, valid, cfg)
    code_grad = 0.5 * (dmi @ R + dmi.T @ R) / n_live
    return -float(mi[live].sum()) / n_live, relaxed_backward(m, X, code_grad, slope), n_live


def _warm(reservoir: Reservoir) -> bool:
    return len(reservoir) >= max(10, reservoir.capacity // 100)


def train_online(
    stream: Dataset,
    benchmark: RetrievalBenchmark,
    cfg: TrainConfig,
    policies: list[RefreshPolicy] | RefreshPolicy | None = None,
    labeling=None,
    checkpoints: np.ndarray | None = None,
    initial: HashMapping | None = None,
) -> TrainReport:
    """Learn from a stream while refresh policies maintain their hash tables.

    All policies observe the same learner trajectory and reservoir, which is
    what makes their update counts and mAP curves directly comparable. On
    each arrival the policies check first, then the example is partitioned
    against the reservoir, used for one SGD step, and finally offered to the
    reservoir. mAP of every policy's table is recorded after each checkpoint
    position.
    """
    n = len(stream)
    if n == 0:
        raise DomainError("cannot train on an empty stream")
    labeling = labeling or ClassLabeling()
    if policies is None:
        policies = [TriggerUpdate(cfg=cfg.binning, labeling=labeling)]
    elif isinstance(policies, RefreshPolicy):
        policies = [policies]
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise DomainError(f"policy names must be unique, got {names}")
    binning = cfg.binning
    if checkpoints is None:
        checkpoints = checkpoint_schedule(n, substream(cfg.seed, "checkpoints"))
    checkpoints = set(int(c) for c in checkpoints)

    m = initial or init_mapping(stream.dim, cfg)
    reservoir = Reservoir(cfg.reservoir_capacity, stream.dim, substream(cfg.seed, "reservoir"))
    retrieval = benchmark.retrieval_set
    runs = {p.name: PolicyRun(p.name) for p in policies}
    map_cache: dict = {}

    def table_map(p: RefreshPolicy) -> float:
        key = (p.name, p.state.version)
        if key not in map_cache:
            map_cache[key] = benchmark.mean_ap(p.table, p.state.snapshot)
        return map_cache[key]

    for p in policies:
        p.initialize(m, retrieval)

    report = TrainReport(initial_mapping=m)
    velocity = np.zeros_like(m.W)
    X, y = stream.features, stream.labels
    for t in range(n):
        qcache: dict = {}

        def shared_quality(mapping, _cache=qcache):
            key = id(mapping)
            if key not in _cache:
                _cache[key] = (mapping, quality(reservoir, mapping, binning, labeling))
            return _cache[key][1]

        for p in policies:
            p.maybe_trigger(m, reservoir, retrieval, t, quality_fn=shared_quality)

        if _warm(reservoir):
            anchor_label = None if y is None else y[t : t + 1]
            pos = labeling.neighbor_mask(X[t : t + 1], anchor_label, reservoir.features, reservoir.labels)[0]
            if pos.any() and not pos.all():
                loss, grad = anchor_loss_grad(m, X[t], reservoir.features, pos, binning)
                m, velocity = apply_momentum(m, grad, velocity, cfg.rate_at(t), cfg.momentum)
                report.loss_trace.append((t + 1, loss))
        reservoir.observe(stream[t])

        if t + 1 in checkpoints:
            for p in policies:
                runs[p.name].checkpoint_metrics.append((t + 1, table_map(p)))

    for p in policies:
        run = runs[p.name]
        run.update_log = list(p.log)
        run.update_count = p.update_count
    report.policies = runs
    report.final_mapping = m
    return report


def train_batch(dataset: Dataset, cfg: TrainConfig, labeling=None,
                initial: HashMapping | None = None) -> TrainReport:
    """Minibatch momentum SGD over shuffled epochs with step learning-rate decay."""
    if not dataset.labeled and not (labeling is not None and labeling.name == "percentile"):
        raise DomainError("batch training needs class labels or a percentile labeling")
    if cfg.minibatch_size < 2:
        raise DomainError("minibatch size must be at least 2")
    binning = cfg.binning
    rng = substream(cfg.seed, "shuffle")
    m = initial or init_mapping(dataset.dim, cfg)
    report = TrainReport(initial_mapping=m)
    velocity = np.zeros_like(m.W)
    X, y = dataset.features, dataset.labels
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.rate_at(epoch)
        order = rng.permutation(len(dataset))
        live_total = 0
        for start in range(0, len(order), cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            if idx.size < 2:
                continue
            loss, grad, n_live = minibatch_loss_grad(
                m, X[idx], None if y is None else y[idx], binning, labeling
            )
            if n_live == 0:
                continue
            live_total += n_live
            m, velocity = apply_momentum(m, grad, velocity, lr, cfg.momentum)
            step += 1
            report.loss_trace.append((step, loss))
        if live_total == 0:
            log.warning("epoch %d: every anchor had a single-class minibatch; no update", epoch)
    report.final_mapping = m
    return report
