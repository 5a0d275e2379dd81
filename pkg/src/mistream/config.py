"""Experiment configuration: a flat YAML mapping with documented defaults."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core import parse_labeling
from .errors import ConfigError, DomainError

ONLINE_LEARNING_RATE = 0.01
BATCH_LEARNING_RATE = 0.1
BATCH_DECAY_EVERY = 10


@dataclass
class ExperimentConfig:
    """All experiment knobs.

    ``learning_rate`` and ``decay_every`` default by mode: online runs use a
    constant rate of 0.01; batch runs start at 0.1 and halve every 10 epochs.
    Data are split per trial into ``n_queries`` queries, a fixed retrieval
    set of ``retrieval_size`` examples, and the stream (everything else,
    truncated to ``stream_length`` if set).
    ``theta`` accepts ``inf`` / ``-inf``.
    """

    data: str | None = None
    data_format: str | None = None
    labeled: bool = True
    bits: int = 32
    A: float = 10.0
    bins: int | None = None
    learning_rate: float | None = None
    momentum: float = 0.9
    decay_factor: float = 0.5
    decay_every: int | None = None
    minibatch_size: int = 100
    epochs: int = 100
    reservoir_capacity: int = 1000
    theta: float = 0.0
    check_interval: int = 100
    seed: int = 0
    trials: int = 3
    checkpoints: int = 50
    labeling: str = "class"
    mode: str = "online"
    n_queries: int = 200
    retrieval_size: int = 2000
    stream_length: int | None = None
    map_cutoff: int | None = None
    n_mappings: int = 50
    correlation_queries: int = 100
    sweep_param: str | None = None
    sweep_values: list = field(default_factory=list)
    output_dir: str = "out"
    workers: int = 1
    synth_n: int = 22300
    synth_d: int = 32
    synth_classes: int = 3
    synth_spread: float = 0.3
    synth_radius: float = 1.0

    def __post_init__(self):
        self.validate()

    @property
    def rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return BATCH_LEARNING_RATE if self.mode == "batch" else ONLINE_LEARNING_RATE

    @property
    def decay(self) -> int | None:
        if self.decay_every is not None:
            return self.decay_every
        return BATCH_DECAY_EVERY if self.mode == "batch" else None

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(1 <= self.bits <= 1024, f"bits must be in [1, 1024], got {self.bits}")
        need(self.A > 0, f"A must be positive, got {self.A}")
        need(self.bins is None or self.bins >= 1, "bins must be >= 1")
        need(self.learning_rate is None or self.learning_rate >= 0, "learning_rate must be >= 0")
        need(0 <= self.momentum < 1, "momentum must lie in [0, 1)")
        need(0 < self.decay_factor <= 1, "decay_factor must lie in (0, 1]")
        need(self.decay_every is None or self.decay_every >= 1, "decay_every must be >= 1")
        need(self.minibatch_size >= 2, "minibatch_size must be >= 2")
        need(self.epochs >= 0, "epochs must be >= 0")
        need(self.reservoir_capacity >= 2, "reservoir_capacity must be >= 2")
        need(not math.isnan(self.theta), "theta must not be NaN")
        need(self.check_interval >= 1, "check_interval must be >= 1")
        need(self.trials >= 1, "trials must be >= 1")
        need(self.checkpoints >= 2, "checkpoints must be >= 2")
        need(self.mode in ("online", "batch"), f"mode must be online or batch, got {self.mode!r}")
        need(self.n_queries >= 1, "n_queries must be >= 1")
        need(self.retrieval_size >= 1, "retrieval_size must be >= 1")
        need(self.stream_length is None or self.stream_length >= 1, "stream_length must be >= 1")
        need(self.map_cutoff is None or self.map_cutoff >= 1, "map_cutoff must be >= 1")
        need(self.n_mappings >= 1, "n_mappings must be >= 1")
        need(self.correlation_queries >= 1, "correlation_queries must be >= 1")
        need(self.sweep_param in (None, "theta", "U"), "sweep_param must be theta or U")
        need(self.workers >= 1, "workers must be >= 1")
        need(self.data_format in (None, "mihf", "csv"), "data_format must be mihf or csv")
        try:
            parse_labeling(self.labeling)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def labeling_rule(self):
        return parse_labeling(self.labeling)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, value):
    """Convert a raw YAML / command-line value to the field's type."""
    kind = FIELD_TYPES[key]
    if value is None or (isinstance(value, str) and value.lower() in ("none", "null")):
        if "None" in kind:
            return None
        raise ConfigError(f"{key} may not be null")
    try:
        if kind.startswith("int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind.startswith("float"):
            return float(value)
        if kind.startswith("bool"):
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("true", "yes", "1"):
                return True
            if str(value).lower() in ("false", "no", "0"):
                return False
            raise ValueError
        if kind.startswith("list"):
            if isinstance(value, str):
                return [float(v) for v in value.split(",") if v.strip()]
            return [float(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r} (expected {kind})") from None


def build_config(raw: dict | None = None, **overrides) -> ExperimentConfig:
    merged = dict(raw or {})
    merged.update({k: v for k, v in overrides.items()})
    unknown = sorted(set(merged) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in merged.items()})


def load_config(path=None, **overrides) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping of keys to values")
    return build_config(raw, **overrides)
