"""Linear hash mappings, packed binary codes and Hamming distances."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Example
from .errors import DomainError

WORD_BITS = 64
MAX_BITS = 1024

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def _popcount_swar(words: np.ndarray) -> np.ndarray:
    x = words.astype(np.uint64, copy=True)
    x -= (x >> np.uint64(1)) & _M1
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return ((x * _H01) >> np.uint64(56)).astype(np.uint8)


if hasattr(np, "bitwise_count"):

    def popcount(words: np.ndarray) -> np.ndarray:
        """Per-word population count of a uint64 array."""
        return np.bitwise_count(words)

else:  # pragma: no cover - numpy < 2.0
    popcount = _popcount_swar


def n_words(b: int) -> int:
    return (b + WORD_BITS - 1) // WORD_BITS


def pack_signs(signs: np.ndarray) -> np.ndarray:
    """Pack ``(..., b)`` sign arrays into ``(..., ceil(b/64))`` uint64 words.

    Bit ``i`` lands in word ``i // 64`` at position ``i % 64``; positive
    entries set the bit. Padding bits are zero.
    """
    signs = np.asarray(signs)
    b = signs.shape[-1]
    nw = n_words(b)
    bits = np.zeros(signs.shape[:-1] + (nw * WORD_BITS,), dtype=np.uint8)
    bits[..., :b] = signs > 0
    by = np.packbits(bits, axis=-1, bitorder="little")
    return by.view("<u8").reshape(signs.shape[:-1] + (nw,))


def unpack_signs(words: np.ndarray, b: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")[..., :b]
    return bits.astype(np.int8) * 2 - 1


class BinaryCode:
    """A b-bit code in {-1,+1}^b stored as packed 64-bit words."""

    __slots__ = ("bits", "length")

    def __init__(self, bits: np.ndarray, length: int):
        if not 1 <= length <= MAX_BITS:
            raise DomainError(f"code length must be in [1, {MAX_BITS}], got {length}")
        bits = np.array(bits, dtype=np.uint64).ravel()
        if bits.shape[0] != n_words(length):
            raise DomainError(f"{length}-bit code needs {n_words(length)} words, got {bits.shape[0]}")
        pad = bits.shape[0] * WORD_BITS - length
        if pad and int(bits[-1]) >> (WORD_BITS - pad):
            raise DomainError("padding bits of a binary code must be zero")
        bits.setflags(write=False)
        self.bits = bits
        self.length = length

    @classmethod
    def from_signs(cls, signs) -> "BinaryCode":
        signs = np.asarray(signs).ravel()
        return cls(pack_signs(signs), signs.shape[0])

    def to_signs(self) -> np.ndarray:
        return unpack_signs(self.bits, self.length)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other):
        return (
            isinstance(other, BinaryCode)
            and other.length == self.length
            and np.array_equal(other.bits, self.bits)
        )

    def __hash__(self):
        return hash((self.length, self.bits.tobytes()))

    def __repr__(self):
        s = "".join("+" if v > 0 else "-" for v in self.to_signs())
        return f"BinaryCode({s})"


class RelaxedCode:
    """Real-valued surrogate of a binary code, entries strictly in (-1, 1)."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = np.array(values, dtype=np.float64).ravel()
        if values.size == 0:
            raise DomainError("relaxed code must have at least one entry")
        if not np.all(np.abs(values) < 1.0):
            raise DomainError("relaxed code entries must lie strictly inside (-1, 1)")
        values.setflags(write=False)
        self.values = values

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_binary(self) -> BinaryCode:
        return BinaryCode.from_signs(np.where(self.values >= 0, 1, -1))


@dataclass(frozen=True, eq=False)
class HashMapping:
    """Linear hash mapping: bit i is sign(w_i . x), relaxed as 2*sigmoid(A w_i . x) - 1.

    ``W`` has shape ``(d, b)``; column ``i`` parameterizes bit ``i``.
    """

    W: np.ndarray
    A: float = 10.0

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64, copy=True)
        if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
            raise DomainError(f"W must be a non-empty d x b matrix, got shape {W.shape}")
        if W.shape[1] > MAX_BITS:
            raise DomainError(f"at most {MAX_BITS} bits are supported")
        if not np.all(np.isfinite(W)):
            raise DomainError("W contains non-finite entries")
        if not (np.isfinite(self.A) and self.A > 0):
            raise DomainError(f"sigmoid sharpness A must be positive, got {self.A}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "A", float(self.A))

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def b(self) -> int:
        return self.W.shape[1]

    def projections(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise DomainError(f"feature length {X.shape[-1]} does not match mapping input dim {self.d}")
        return X @ self.W

    def sign_codes(self, X: np.ndarray) -> np.ndarray:
        """``(n, b)`` int8 signs with sign(0) = +1."""
        return np.where(self.projections(X) >= 0, 1, -1).astype(np.int8)

    def packed_codes(self, X: np.ndarray) -> np.ndarray:
        return pack_signs(self.projections(X) >= 0)

    def relaxed_codes(self, X: np.ndarray) -> np.ndarray:
        # 2 * sigmoid(a) - 1 == tanh(a / 2)
        return np.tanh(0.5 * self.A * self.projections(X))

    def distance_to(self, other: "HashMapping") -> float:
        """Frobenius norm of the parameter difference."""
        if other.W.shape != self.W.shape:
            return float("inf")
        return float(np.linalg.norm(self.W - other.W))

    def __eq__(self, other):
        return isinstance(other, HashMapping) and other.A == self.A and np.array_equal(other.W, self.W)

    __hash__ = None


def _features(m: HashMapping, x: Example) -> np.ndarray:
    if x.dim != m.d:
        raise DomainError(f"feature length {x.dim} does not match mapping input dim {m.d}")
    return x.features


def encode(m: HashMapping, x: Example) -> BinaryCode:
    return BinaryCode(m.packed_codes(_features(m, x)[None, :])[0], m.b)


def encode_relaxed(m: HashMapping, x: Example) -> RelaxedCode:
    values = m.relaxed_codes(_features(m, x)[None, :])[0]
    # float64 saturates to exactly +-1 once |A w.x| exceeds ~37
    return RelaxedCode(np.clip(values, -np.nextafter(1.0, 0.0), np.nextafter(1.0, 0.0)))


def hamming_distance(c1: BinaryCode, c2: BinaryCode) -> int:
    if c1.length != c2.length:
        raise DomainError(f"code lengths differ: {c1.length} vs {c2.length}")
    return int(popcount(c1.bits ^ c2.bits).sum())


def hamming_matrix(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances between packed code matrices ``(m, w)`` and ``(n, w)``."""
    q = np.atleast_2d(q)
    r = np.atleast_2d(r)
    out = np.zeros((q.shape[0], r.shape[0]), dtype=np.int32)
    for w in range(q.shape[1]):
        out += popcount(q[:, w, None] ^ r[None, :, w])
    return out


def relaxed_distance(r1: RelaxedCode, r2: RelaxedCode) -> float:
    """Continuous surrogate of the Hamming distance, 0.5 * (b - <r1, r2>)."""
    if len(r1) != len(r2):
        raise DomainError(f"code lengths differ: {len(r1)} vs {len(r2)}")
    return 0.5 * (len(r1) - float(np.dot(r1.values, r2.values)))


class HashTable:
    """Binary codes of a retrieval set under one mapping snapshot."""

    def __init__(self, ids: np.ndarray, codes: np.ndarray, b: int, mapping_version: int = 0):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.codes = np.asarray(codes, dtype=np.uint64).reshape(len(self.ids), n_words(b))
        self.b = b
        self.mapping_version = int(mapping_version)
        self.ids.setflags(write=False)
        self.codes.setflags(write=False)

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def entries(self) -> dict:
        return {int(i): BinaryCode(c, self.b) for i, c in zip(self.ids, self.codes)}


def rebuild_table(
    m: HashMapping,
    retrieval_set: Dataset,
    version: int,
    current: HashTable | None = None,
    workers: int = 1,
    chunk: int = 65536,
) -> HashTable:
    """Encode every retrieval example with ``m``.

    With ``workers > 1`` the encoding fans out over chunks of examples on a
    thread pool; numpy releases the GIL inside the matrix product.
    """
    if current is not None and version <= current.mapping_version:
        raise DomainError(
            f"table version must increase: {version} <= {current.mapping_version}"
        )
    n = len(retrieval_set)
    if n and retrieval_set.dim != m.d:
        raise DomainError(f"feature length {retrieval_set.dim} does not match mapping input dim {m.d}")
    X = retrieval_set.features
    if workers > 1 and n > chunk:
        parts = [X[i : i + chunk] for i in range(0, n, chunk)]
        with ThreadPoolExecutor(workers) as pool:
            codes = np.concatenate(list(pool.map(m.packed_codes, parts)))
    else:
        codes = m.packed_codes(X) if n else np.zeros((0, n_words(m.b)), dtype=np.uint64)
    return HashTable(retrieval_set.ids, codes, m.b, version)
