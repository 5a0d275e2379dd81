"""Streaming learned hashing.

Linear hash mappings trained by gradient ascent on the mutual information
between Hamming distances and neighbor relations, with a reservoir-based
trigger that refreshes the hash table only when the learned mapping is
measurably better than the one that built it.
"""

from .core import ClassLabeling, Dataset, Example, NeighborPartition, PercentileLabeling
from .errors import (ConfigError, DomainError, LabelingError, MistreamError, ParseError, SchemaError,
                     TrainingError)
from .hashing import BinaryCode, HashMapping, HashTable, encode, hamming_distance, rebuild_table
from .learner import TrainConfig, TrainReport, train_batch, train_online
from .mi import BinningConfig, HistogramPair, mutual_information
from .reservoir import Reservoir, quality
from .trigger import FixedIntervalTrigger, TriggerUpdate

__version__ = "0.1.0"

__all__ = [
    "BinaryCode", "BinningConfig", "ClassLabeling", "ConfigError", "Dataset", "DomainError", "Example",
    "FixedIntervalTrigger", "HashMapping", "HashTable", "HistogramPair", "LabelingError", "MistreamError",
    "NeighborPartition", "ParseError", "PercentileLabeling", "Reservoir", "SchemaError", "TrainConfig",
    "TrainReport", "TrainingError", "TriggerUpdate", "encode", "hamming_distance", "mutual_information",
    "quality", "rebuild_table", "train_batch", "train_online",
]
