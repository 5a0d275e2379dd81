"""Binary and text file formats for features and mappings.

MIHF feature file (little-endian)::

    magic "MIHF" | version u16 | count u64 | dim u32 | has_labels u8
    count * dim float32 features, row-major
    count int32 labels (only if has_labels)

MHSH mapping file (little-endian)::

    magic "MHSH" | version u16 | d u32 | b u32 | A float64
    d * b float64 weights, column-major (column i is w_i)
"""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path

import numpy as np

from .core import Dataset
from .errors import ParseError, SchemaError
from .hashing import HashMapping

FEATURE_MAGIC = b"MIHF"
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct("<4sHQIB")

MAPPING_MAGIC = b"MHSH"
MAPPING_VERSION = 1
MAPPING_HEADER = struct.Struct("<4sHIId")


def feature_bytes(data: Dataset) -> bytes:
    labeled = data.labels is not None
    head = FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, len(data), data.dim, int(labeled))
    body = np.ascontiguousarray(data.features, dtype="<f4").tobytes()
    tail = np.ascontiguousarray(data.labels, dtype="<i4").tobytes() if labeled else b""
    return head + body + tail


def write_features(data: Dataset, path) -> None:
    Path(path).write_bytes(feature_bytes(data))


def parse_features(raw: bytes, source: str = "<bytes>") -> Dataset:
    if len(raw) < FEATURE_HEADER.size:
        raise ParseError(
            f"{source}: truncated header, expected {FEATURE_HEADER.size} bytes, got {len(raw)}"
        )
    magic, version, count, dim, labeled = FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise ParseError(f"{source}: bad magic {magic!r} at offset 0, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise ParseError(f"{source}: unsupported feature file version {version} at offset 4")
    if labeled not in (0, 1):
        raise ParseError(f"{source}: label flag must be 0 or 1, got {labeled} at offset 18")
    if dim == 0 and count:
        raise SchemaError(f"{source}: zero feature dimension")
    expected = FEATURE_HEADER.size + count * dim * 4 + (count * 4 if labeled else 0)
    if len(raw) != expected:
        raise ParseError(f"{source}: expected {expected} bytes from header, got {len(raw)}")
    off = FEATURE_HEADER.size
    X = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=off).reshape(count, dim)
    labels = None
    if labeled:
        labels = np.frombuffer(raw, dtype="<i4", count=count, offset=off + count * dim * 4)
    return Dataset(X.astype(np.float64), None if labels is None else labels.astype(np.int64))


def read_features(path) -> Dataset:
    return parse_features(Path(path).read_bytes(), str(path))


def read_csv(path, labeled: bool = True) -> Dataset:
    """One example per row: features, then an integer label if ``labeled``.

    Features are rounded to float32 so a CSV and the MIHF file of the same
    data load to identical datasets.
    """
    rows, labels = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < (2 if labeled else 1):
                    raise SchemaError(f"{path}: row {r} has too few columns ({width})")
            elif len(row) != width:
                raise SchemaError(f"{path}: row {r} has {len(row)} columns, expected {width}")
            feats = row[:-1] if labeled else row
            vals = []
            for c, cell in enumerate(feats, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {r}, column {c}: not a number: {cell!r}") from None
            rows.append(vals)
            if labeled:
                try:
                    labels.append(int(row[-1]))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {r}, column {width}: label is not an integer: {row[-1]!r}"
                    ) from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=np.float32).astype(np.float64)
    return Dataset(X, np.asarray(labels, dtype=np.int64) if labeled else None)


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        X32 = data.features.astype(np.float32)
        for i in range(len(data)):
            row = [repr(float(v)) for v in X32[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            w.writerow(row)


def ingest(path, fmt: str | None = None, labeled: bool = True) -> Dataset:
    """Load a dataset from an MIHF or CSV file (format inferred from the suffix)."""
    fmt = fmt or ("csv" if str(path).lower().endswith(".csv") else "mihf")
    if fmt == "mihf":
        return read_features(path)
    if fmt == "csv":
        return read_csv(path, labeled)
    raise ParseError(f"unknown data format {fmt!r}")


def mapping_bytes(m: HashMapping) -> bytes:
    head = MAPPING_HEADER.pack(MAPPING_MAGIC, MAPPING_VERSION, m.d, m.b, m.A)
    return head + np.asarray(m.W, dtype="<f8").ravel(order="F").tobytes()


def save_mapping(m: HashMapping, path) -> None:
    Path(path).write_bytes(mapping_bytes(m))


def parse_mapping(raw: bytes, source: str = "<bytes>") -> HashMapping:
    if len(raw) < MAPPING_HEADER.size:
        raise ParseError(
            f"{source}: truncated header, expected {MAPPING_HEADER.size} bytes, got {len(raw)}"
        )
    magic, version, d, b, A = MAPPING_HEADER.unpack_from(raw)
    if magic != MAPPING_MAGIC:
        raise ParseError(f"{source}: bad magic {magic!r} at offset 0, expected {MAPPING_MAGIC!r}")
    if version != MAPPING_VERSION:
        raise ParseError(f"{source}: unsupported mapping file version {version} at offset 4")
    expected = MAPPING_HEADER.size + d * b * 8
    if len(raw) != expected:
        raise ParseError(f"{source}: expected {expected} bytes from header, got {len(raw)}")
    W = np.frombuffer(raw, dtype="<f8", count=d * b, offset=MAPPING_HEADER.size)
    return HashMapping(W.reshape((d, b), order="F"), A)


def load_mapping(path) -> HashMapping:
    return parse_mapping(Path(path).read_bytes(), str(path))


OUTPUT_ENV = "MISTREAM_OUTPUT_DIR"


def output_dir(configured=None) -> Path:
    """Output directory: environment override, then config value, then ``./out``."""
    path = Path(os.environ.get(OUTPUT_ENV) or configured or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path
