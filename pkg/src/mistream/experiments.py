"""Experiment runners behind the command line: online trials, sweeps, batch runs.

Every runner takes an :class:`ExperimentConfig`, runs ``cfg.trials`` trials
with seeds ``cfg.seed + trial`` and writes its tables to an output
directory. Metric CSVs contain no timing information, so reruns with the
same config are byte-identical; wall times go to a separate ``timing.csv``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .core import Dataset
from .errors import ConfigError, DomainError
from .evaluation import RetrievalBenchmark, checkpoint_schedule, correlation_study, distribution_overlap
from .hashing import HashMapping, rebuild_table
from .io import ingest, save_mapping
from .learner import TrainConfig, TrainReport, init_mapping, train_batch, train_online
from .seeding import substream
from .synth import gaussian_clusters
from .trigger import FixedIntervalTrigger, TriggerUpdate

BASELINE = "baseline"
TU = "tu"


def fmt(v) -> str:
    """Stable text for a CSV cell."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    return str(v)


def write_table(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_jsonl(path, records) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, allow_nan=False) + "\n")
    return path


# ---------------------------------------------------------------- data


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    """The configured data file, or a synthetic cluster set seeded by ``cfg.seed``."""
    if cfg.data:
        return ingest(cfg.data, cfg.data_format, cfg.labeled)
    return gaussian_clusters(cfg.synth_n, cfg.synth_d, cfg.synth_classes, cfg.synth_spread,
                             seed=cfg.seed, radius=cfg.synth_radius)


@dataclass
class Split:
    queries: Dataset
    retrieval: Dataset
    stream: Dataset


def split_dataset(data: Dataset, cfg: ExperimentConfig, seed: int) -> Split:
    """Random disjoint queries / retrieval set / stream for one trial."""
    need = cfg.n_queries + cfg.retrieval_size
    if len(data) <= need:
        raise ConfigError(
            f"dataset has {len(data)} examples; n_queries + retrieval_size = {need} leaves no stream"
        )
    perm = substream(seed, "split").permutation(len(data))
    q = np.sort(perm[: cfg.n_queries])
    r = np.sort(perm[cfg.n_queries : need])
    s = perm[need:]
    if cfg.stream_length is not None:
        if cfg.stream_length > s.size:
            raise ConfigError(f"stream_length {cfg.stream_length} exceeds the {s.size} available examples")
        s = s[: cfg.stream_length]
    return Split(data.subset(q), data.subset(r), data.subset(s))


def train_config(cfg: ExperimentConfig, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        bits=cfg.bits, A=cfg.A, learning_rate=cfg.rate, momentum=cfg.momentum,
        decay_factor=cfg.decay_factor, decay_every=cfg.decay, minibatch_size=cfg.minibatch_size,
        epochs=cfg.epochs, seed=cfg.seed if seed is None else seed, mode=cfg.mode, bins=cfg.bins,
        reservoir_capacity=cfg.reservoir_capacity,
    )


def _require_labels(data: Dataset, cfg: ExperimentConfig) -> None:
    if not data.labeled and cfg.labeling_rule.name == "class":
        raise ConfigError("class labeling needs a labeled dataset; use 'percentile p' for unlabeled data")


def _benchmark(split: Split, cfg: ExperimentConfig) -> RetrievalBenchmark:
    return RetrievalBenchmark(split.queries, split.retrieval, cfg.labeling_rule, cfg.map_cutoff)


# ---------------------------------------------------------------- online


@dataclass
class OnlineTrial:
    trial: int
    seed: int
    report: TrainReport
    wall_time: float = 0.0


def _online_trial(cfg: ExperimentConfig, data: Dataset, trial: int, policy_specs) -> OnlineTrial:
    seed = cfg.seed + trial
    split = split_dataset(data, cfg, seed)
    tcfg = train_config(cfg, seed)
    labeling = cfg.labeling_rule
    policies = []
    for kind, name, theta, interval in policy_specs:
        if kind == BASELINE:
            policies.append(FixedIntervalTrigger(interval, name=name, workers=cfg.workers))
        else:
            policies.append(TriggerUpdate(theta, interval, cfg=tcfg.binning, labeling=labeling,
                                          name=name, workers=cfg.workers))
    checkpoints = checkpoint_schedule(len(split.stream), substream(seed, "checkpoints"), cfg.checkpoints)
    t0 = time.perf_counter()
    report = train_online(split.stream, _benchmark(split, cfg), tcfg, policies, labeling, checkpoints)
    return OnlineTrial(trial, seed, report, time.perf_counter() - t0)


def _run_trials(cfg: ExperimentConfig, data: Dataset, policy_specs) -> list[OnlineTrial]:
    _require_labels(data, cfg)
    trials = range(cfg.trials)
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.trials)) as pool:
            futures = [pool.submit(_online_trial, cfg.replace(workers=1), data, t, policy_specs) for t in trials]
            return [f.result() for f in futures]
    return [_online_trial(cfg, data, t, policy_specs) for t in trials]


def _ratio(num, den):
    return num / den if den else None


@dataclass
class OnlineResult:
    trials: list
    summary: dict = field(default_factory=dict)  # policy -> (updates, final_map, auc)
    files: list = field(default_factory=list)


def _write_online_outputs(out: Path, trials: list[OnlineTrial], prefix: str,
                          baseline_of: dict | None = None) -> list[Path]:
    """Per-trial tables; ``baseline_of`` maps each policy to its reference policy."""
    files = []
    curve_rows, trial_rows, timing_rows = [], [], []
    for tr in trials:
        for name, run in tr.report.policies.items():
            base = tr.report.policies[(baseline_of or {}).get(name, BASELINE)]
            trial_rows.append((tr.trial, tr.seed, name, run.update_count, run.final_map, run.auc,
                               _ratio(base.update_count, run.update_count), run.auc - base.auc))
            for pos, v in run.checkpoint_metrics:
                curve_rows.append((tr.trial, name, pos, v))
            log = [{k: v for k, v in vars(e).items() if k != "wall_time"} for e in run.update_log]
            files.append(write_jsonl(out / f"{prefix}_updates_trial{tr.trial}_{name}.jsonl", log))
            timing_rows.append((tr.trial, name, sum(e.wall_time for e in run.update_log)))
        timing_rows.append((tr.trial, "total", tr.wall_time))
        (out / f"{prefix}_report_trial{tr.trial}.json").write_text(
            json.dumps(tr.report.to_dict(), allow_nan=False) + "\n", encoding="utf-8"
        )
        files.append(out / f"{prefix}_report_trial{tr.trial}.json")
    files.append(write_table(out / f"{prefix}_trials.csv",
                             ["trial", "seed", "policy", "updates", "final_map", "auc", "reduction", "delta_auc"],
                             trial_rows))
    files.append(write_table(out / f"{prefix}_curves.csv", ["trial", "policy", "position", "map"], curve_rows))
    write_table(out / "timing.csv", ["trial", "policy", "wall_time_s"], timing_rows)
    return files


def _summarize(trials: list[OnlineTrial]) -> dict:
    names = list(trials[0].report.policies)
    out = {}
    for name in names:
        runs = [t.report.policies[name] for t in trials]
        out[name] = (
            float(np.mean([r.update_count for r in runs])),
            float(np.mean([r.final_map for r in runs])),
            float(np.mean([r.auc for r in runs])),
        )
    return out


def run_online(cfg: ExperimentConfig, out=None, data: Dataset | None = None) -> OnlineResult:
    """Baseline and quality-triggered refresh on the same learner trajectory.

    Writes ``online_trials.csv`` (one row per trial and policy),
    ``online_summary.csv`` (trial means), ``online_curves.csv`` (mAP at each
    checkpoint), one JSONL update log per trial and policy, and a JSON
    training report per trial.
    """
    data = load_dataset(cfg) if data is None else data
    specs = [(BASELINE, BASELINE, -math.inf, cfg.check_interval), (TU, TU, cfg.theta, cfg.check_interval)]
    trials = _run_trials(cfg, data, specs)
    result = OnlineResult(trials, _summarize(trials))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        result.files = _write_online_outputs(out, trials, "online")
        b_upd, _, b_auc = result.summary[BASELINE]
        rows = [(name, upd, fm, auc, _ratio(b_upd, upd), auc - b_auc)
                for name, (upd, fm, auc) in result.summary.items()]
        result.files.append(write_table(out / "online_summary.csv",
                                        ["policy", "updates", "final_map", "auc", "reduction", "delta_auc"], rows))
    return result


# ---------------------------------------------------------------- sweep


@dataclass
class SweepRow:
    value: float
    updates: float
    baseline_updates: float
    auc: float
    baseline_auc: float

    @property
    def reduction(self) -> float | None:
        return _ratio(self.baseline_updates, self.updates)

    @property
    def delta_auc(self) -> float:
        return self.auc - self.baseline_auc

    @property
    def delta_auc_pct(self) -> float | None:
        return None if self.baseline_auc == 0 else 100.0 * self.delta_auc / self.baseline_auc


def _policy_name(prefix: str, v) -> str:
    return f"{prefix}_{fmt(float(v))}"


def sweep(cfg: ExperimentConfig, param: str | None = None, values=None, out=None,
          data: Dataset | None = None) -> list[SweepRow]:
    """Vary theta or U for the triggered policy; one row per value, averaged over trials.

    All variants of a trial share one learner trajectory. For a theta sweep
    every row is compared with the fixed-interval baseline at
    ``cfg.check_interval``; for a U sweep each row is compared with the
    baseline running at the same U.
    """
    param = param or cfg.sweep_param
    values = list(cfg.sweep_values if values is None else values)
    if param not in ("theta", "U"):
        raise ConfigError(f"sweep parameter must be theta or U, got {param!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if any(math.isnan(float(v)) for v in values):
        raise ConfigError("sweep values must not be NaN")
    if param == "U":
        if any(float(v) < 1 or not float(v).is_integer() for v in values):
            raise ConfigError("U values must be positive integers")
        values = [int(v) for v in values]
        specs, pairs = [], []
        for u in dict.fromkeys(values):
            b, t = _policy_name("baseline_U", u), _policy_name("tu_U", u)
            specs += [(BASELINE, b, -math.inf, u), (TU, t, cfg.theta, u)]
        pairs = [(v, _policy_name("baseline_U", v), _policy_name("tu_U", v)) for v in values]
    else:
        values = [float(v) for v in values]
        specs = [(BASELINE, BASELINE, -math.inf, cfg.check_interval)]
        specs += [(TU, _policy_name("tu_theta", v), v, cfg.check_interval) for v in dict.fromkeys(values)]
        pairs = [(v, BASELINE, _policy_name("tu_theta", v)) for v in values]
    data = load_dataset(cfg) if data is None else data
    trials = _run_trials(cfg, data, specs)
    summary = _summarize(trials)
    rows = [SweepRow(v, summary[t][0], summary[b][0], summary[t][2], summary[b][2]) for v, b, t in pairs]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        ref = {t: b for _, b, t in pairs}
        ref.update({b: b for _, b, _ in pairs})
        _write_online_outputs(out, trials, "sweep", ref)
        write_table(out / "sweep.csv",
                    [param, "updates", "baseline_updates", "reduction", "auc", "baseline_auc", "delta_auc",
                     "delta_auc_pct"],
                    [(r.value, r.updates, r.baseline_updates, r.reduction, r.auc, r.baseline_auc, r.delta_auc,
                      r.delta_auc_pct) for r in rows])
    return rows


# ---------------------------------------------------------------- batch


@dataclass
class BatchTrial:
    trial: int
    seed: int
    report: TrainReport
    initial_map: float
    final_map: float
    initial_overlap: float
    final_overlap: float

    @property
    def overlap_drop(self) -> float:
        return 1.0 - self.final_overlap / self.initial_overlap if self.initial_overlap > 0 else 0.0


def evaluate_mapping(mapping: HashMapping, split: Split, cfg: ExperimentConfig) -> tuple[float, float]:
    """(mAP of the queries against the retrieval set, held-out overlap on the queries)."""
    if mapping.d != split.queries.dim:
        raise DomainError(f"mapping expects {mapping.d}-dim input, data has {split.queries.dim}")
    table = rebuild_table(mapping, split.retrieval, 1, workers=cfg.workers)
    ap = _benchmark(split, cfg).mean_ap(table, mapping)
    overlap = distribution_overlap(mapping, split.queries, cfg.labeling_rule, None)
    return ap, overlap


def run_batch(cfg: ExperimentConfig, out=None, data: Dataset | None = None) -> list[BatchTrial]:
    """Minibatch training on the stream split; evaluated on the held-out queries.

    Writes ``batch_trials.csv``, ``batch_summary.csv``, ``batch_loss.csv``
    and the final mapping of every trial as an MHSH file.
    """
    data = load_dataset(cfg) if data is None else data
    _require_labels(data, cfg)
    cfg = cfg.replace(mode="batch")
    results = []
    for trial in range(cfg.trials):
        seed = cfg.seed + trial
        split = split_dataset(data, cfg, seed)
        tcfg = train_config(cfg, seed)
        initial = init_mapping(split.stream.dim, tcfg)
        report = train_batch(split.stream, tcfg, cfg.labeling_rule, initial)
        m0, o0 = evaluate_mapping(initial, split, cfg)
        m1, o1 = evaluate_mapping(report.final_mapping, split, cfg)
        results.append(BatchTrial(trial, seed, report, m0, m1, o0, o1))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "batch_trials.csv",
                    ["trial", "seed", "initial_map", "final_map", "initial_overlap", "final_overlap",
                     "overlap_drop"],
                    [(r.trial, r.seed, r.initial_map, r.final_map, r.initial_overlap, r.final_overlap,
                      r.overlap_drop) for r in results])
        keys = ("initial_map", "final_map", "initial_overlap", "final_overlap", "overlap_drop")
        write_table(out / "batch_summary.csv", ["metric", "mean"],
                    [(k, float(np.mean([getattr(r, k) for r in results]))) for k in keys])
        write_table(out / "batch_loss.csv", ["trial", "step", "loss"],
                    [(r.trial, s, v) for r in results for s, v in r.report.loss_trace])
        for r in results:
            save_mapping(r.report.final_mapping, out / f"mapping_trial{r.trial}.mhsh")
            (out / f"batch_report_trial{r.trial}.json").write_text(
                json.dumps(r.report.to_dict(), allow_nan=False) + "\n", encoding="utf-8"
            )
    return results


# ---------------------------------------------------------------- correlation


def run_correlation(cfg: ExperimentConfig, out=None, data: Dataset | None = None):
    """Random Gaussian mappings: per-mapping MI against AP, DCG and NDCG."""
    data = load_dataset(cfg) if data is None else data
    _require_labels(data, cfg)
    res = correlation_study(data, cfg.n_mappings, cfg.bits, cfg.correlation_queries,
                            seed=substream(cfg.seed, "mappings"), labeling=cfg.labeling_rule,
                            cfg=None if cfg.bins is None else train_config(cfg).binning)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "correlation.csv", ["mapping_id", "mi", "ap", "dcg", "ndcg"], res.rows)
        write_table(out / "correlation_summary.csv", ["metric", "pearson_with_mi"],
                    [("ap", res.pearson_ap), ("dcg", res.pearson_dcg), ("ndcg", res.pearson_ndcg)])
    return res
