"""Hash-table refresh policies: quality-triggered updates and the fixed-interval baseline.

Both policies see the learner only through the current :class:`HashMapping`.
They are driven by :meth:`~RefreshPolicy.maybe_trigger`, which is called on
the arrival of every stream example. Once ``check_interval`` examples have
been processed since the last check, the arriving example causes a check
against the mapping learned so far. Checks therefore happen after ``U``,
``2U``, ... processed examples, and never after the last example of a
finite stream, since no retrieval can follow it.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

from .core import ClassLabeling, Dataset
from .hashing import HashMapping, HashTable, rebuild_table
from .mi import BinningConfig
from .reservoir import Reservoir, quality

DEFAULT_THETA = 0.0
DEFAULT_CHECK_INTERVAL = 100
NORM_TOL = 1e-6

UPDATED = "updated"
SKIPPED = "skipped"


@dataclass
class UpdateLogEntry:
    stream_position: int
    q_candidate: float | None
    q_snapshot: float | None
    decision: str
    wall_time: float
    reason: str = "quality"

    def to_json(self) -> str:
        return json.dumps(asdict(self), allow_nan=False, sort_keys=False)


@dataclass
class TriggerState:
    snapshot: HashMapping | None = None
    snapshot_quality: float | None = None
    theta: float = DEFAULT_THETA
    check_interval: int = DEFAULT_CHECK_INTERVAL
    examples_since_check: int = 0
    update_count: int = 0
    version: int = 0


def _json_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


class RefreshPolicy:
    """Common bookkeeping for table refresh policies."""

    name = "policy"

    def __init__(self, check_interval: int = DEFAULT_CHECK_INTERVAL, theta: float = DEFAULT_THETA,
                 norm_tol: float = NORM_TOL, workers: int = 1, name: str | None = None):
        if name is not None:
            self.name = name
        if check_interval < 1:
            raise ValueError(f"check interval must be positive, got {check_interval}")
        self.state = TriggerState(theta=float(theta), check_interval=int(check_interval))
        self.norm_tol = norm_tol
        self.workers = workers
        self.table: HashTable | None = None
        self.log: list[UpdateLogEntry] = []

    @property
    def update_count(self) -> int:
        return self.state.update_count

    def initialize(self, mapping: HashMapping, retrieval_set: Dataset) -> HashTable:
        """Populate the table from the initial mapping (counts as one update)."""
        st = self.state
        st.snapshot = mapping
        st.snapshot_quality = None
        st.examples_since_check = 0
        st.version = 1
        st.update_count = 1
        self.table = rebuild_table(mapping, retrieval_set, st.version, workers=self.workers)
        self.log = []
        return self.table

    def _adopt(self, mapping: HashMapping, retrieval_set: Dataset) -> HashTable:
        st = self.state
        st.snapshot = mapping
        st.version += 1
        st.update_count += 1
        self.table = rebuild_table(mapping, retrieval_set, st.version, self.table, workers=self.workers)
        return self.table

    def _due(self) -> bool:
        st = self.state
        if st.snapshot is None:
            raise RuntimeError("policy used before initialize()")
        if st.examples_since_check >= st.check_interval:
            st.examples_since_check = 0
            return True
        return False

    def _unchanged(self, current: HashMapping) -> bool:
        return current.distance_to(self.state.snapshot) < self.norm_tol


class TriggerUpdate(RefreshPolicy):
    """Refresh the table only when the reservoir quality improves by more than theta."""

    name = "tu"

    def __init__(self, theta: float = DEFAULT_THETA, check_interval: int = DEFAULT_CHECK_INTERVAL,
                 cfg: BinningConfig | None = None, labeling=None, norm_tol: float = NORM_TOL,
                 workers: int = 1, name: str | None = None):
        super().__init__(check_interval, theta, norm_tol, workers, name)
        self.cfg = cfg
        self.labeling = labeling or ClassLabeling()

    def _quality_fn(self, reservoir: Reservoir) -> Callable[[HashMapping], float]:
        return lambda m: quality(reservoir, m, self.cfg, self.labeling)

    def maybe_trigger(
        self,
        current: HashMapping,
        reservoir: Reservoir,
        retrieval_set: Dataset,
        position: int,
        quality_fn: Callable[[HashMapping], float] | None = None,
    ):
        """Returns ``(table or None, log entry or None)``.

        ``quality_fn`` may replace the default reservoir evaluation, e.g. to
        share one computation between several policies at the same check.
        """
        due = self._due()
        self.state.examples_since_check += 1
        if not due:
            return None, None
        st = self.state
        t0 = time.perf_counter()
        if len(reservoir) < 2:
            entry = UpdateLogEntry(position, None, _json_float(st.snapshot_quality), SKIPPED,
                                   time.perf_counter() - t0, "reservoir_too_small")
            self.log.append(entry)
            return None, entry
        if self._unchanged(current):
            entry = UpdateLogEntry(position, None, _json_float(st.snapshot_quality), SKIPPED,
                                   time.perf_counter() - t0, "unchanged_mapping")
            self.log.append(entry)
            return None, entry
        qfn = quality_fn or self._quality_fn(reservoir)
        if st.snapshot_quality is None:
            # the initial snapshot is first scored once the reservoir can support it
            st.snapshot_quality = qfn(st.snapshot)
        q_cand = qfn(current)
        q_snap = st.snapshot_quality
        table = None
        if q_cand - q_snap > st.theta:
            table = self._adopt(current, retrieval_set)
            st.snapshot_quality = q_cand
        entry = UpdateLogEntry(position, q_cand, q_snap, UPDATED if table is not None else SKIPPED,
                               time.perf_counter() - t0)
        self.log.append(entry)
        return table, entry


class FixedIntervalTrigger(RefreshPolicy):
    """Data-agnostic baseline: refresh every ``check_interval`` examples."""

    name = "baseline"

    def __init__(self, check_interval: int = DEFAULT_CHECK_INTERVAL, norm_tol: float = NORM_TOL,
                 workers: int = 1, name: str | None = None):
        super().__init__(check_interval, -math.inf, norm_tol, workers, name)

    def maybe_trigger(self, current: HashMapping, reservoir=None, retrieval_set: Dataset = None,
                      position: int = 0, quality_fn=None):
        due = self._due()
        self.state.examples_since_check += 1
        if not due:
            return None, None
        t0 = time.perf_counter()
        if self._unchanged(current):
            entry = UpdateLogEntry(position, None, None, SKIPPED, time.perf_counter() - t0,
                                   "unchanged_mapping")
            self.log.append(entry)
            return None, entry
        table = self._adopt(current, retrieval_set)
        entry = UpdateLogEntry(position, None, None, UPDATED, time.perf_counter() - t0, "interval")
        self.log.append(entry)
        return table, entry


def baseline_trigger(policy: FixedIntervalTrigger, current: HashMapping, retrieval_set: Dataset,
                     position: int = 0):
    table, _ = policy.maybe_trigger(current, None, retrieval_set, position)
    return policy.state, table


def maybe_trigger(policy: TriggerUpdate, current: HashMapping, reservoir: Reservoir,
                  retrieval_set: Dataset, position: int = 0):
    table, entry = policy.maybe_trigger(current, reservoir, retrieval_set, position)
    return policy.state, table, entry


def write_update_log(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")
