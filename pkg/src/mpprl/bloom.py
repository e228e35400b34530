"""Q-gram extraction, CLK Bloom filter encoding and Dice similarities.

Bloom filters are held as read-only numpy boolean arrays. Bulk operations
in the protocol work on bit arrays packed into ``uint64`` words, see
:func:`pack_rows` and :func:`popcount_rows`.

Hashing uses keyed double hashing: ``h_i(g) = (H1(g) + i * H2(g)) mod l``
for ``i = 1..k``, where ``H1`` and ``H2`` are keyed BLAKE2b digests under
two secrets shared by all parties.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_KEY_1 = b"mpprl-shared-secret-one"
DEFAULT_KEY_2 = b"mpprl-shared-secret-two"


class EncodingError(ValueError):
    """Raised when a record has no q-grams to encode."""


@dataclass(frozen=True)
class BloomParams:
    """Parameters every party must agree on before encoding.

    ``pad_segments`` allows a length that is not a multiple of ``parties``:
    filters are then split as if zero bits were appended up to the next
    multiple. Zero padding never contributes to common or total 1-bit
    counts, so similarities are unchanged.
    """

    l: int = 500
    k: int = 20
    q: int = 2
    parties: int = 3
    hash_key_1: bytes = DEFAULT_KEY_1
    hash_key_2: bytes = DEFAULT_KEY_2
    pad_segments: bool = False

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError(f"l must be positive, got {self.l}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.parties < 3:
            raise ValueError(f"at least 3 parties required, got {self.parties}")
        if self.l % self.parties and not self.pad_segments:
            raise ValueError(
                f"l={self.l} is not divisible by {self.parties} parties "
                "(set pad_segments=True to zero-pad)")
        if self.hash_key_1 == self.hash_key_2:
            raise ValueError("the two hash keys must differ")

    @property
    def segment_length(self) -> int:
        return -(-self.l // self.parties)

    @property
    def padded_length(self) -> int:
        return self.segment_length * self.parties


@dataclass(frozen=True, eq=False)
class BloomFilter:
    bits: np.ndarray
    ones: int

    @classmethod
    def from_bits(cls, bits) -> "BloomFilter":
        arr = np.array(bits, dtype=bool)
        if arr.ndim != 1:
            raise ValueError("a Bloom filter is a one-dimensional bit array")
        arr.setflags(write=False)
        return cls(arr, int(arr.sum()))

    @classmethod
    def from_positions(cls, positions: Iterable[int], l: int) -> "BloomFilter":
        arr = np.zeros(l, dtype=bool)
        arr[list(positions)] = True
        return cls.from_bits(arr)

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(np.packbits(self.bits).tobytes())

    def fill_ratio(self) -> float:
        return self.ones / len(self)

    def positions(self) -> np.ndarray:
        return np.flatnonzero(self.bits)


@dataclass(frozen=True, eq=False)
class Segment:
    """The ``index``-th slice of a Bloom filter (1-based, as parties are)."""

    index: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits.setflags(write=False)

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.bits, other.bits)

    @property
    def ones(self) -> int:
        return int(self.bits.sum())


def normalise(value: str) -> str:
    return value.strip().lower()


def qgrams(value: str, q: int = 2) -> frozenset[str]:
    """Distinct contiguous length-``q`` substrings of the normalised value.

    No padding characters are added, so strings shorter than ``q`` give the
    empty set.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    value = normalise(value)
    return frozenset(value[i:i + q] for i in range(len(value) - q + 1))


def record_qgrams(values: Sequence[str], q: int) -> frozenset[str]:
    grams = set()
    for value in values:
        grams |= qgrams(value, q)
    return frozenset(grams)


def _keyed_int(data: bytes, key: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, key=key, digest_size=8).digest(), "big")


@functools.lru_cache(maxsize=1 << 16)
def element_positions(element: str, l: int, k: int, key1: bytes, key2: bytes) -> tuple[int, ...]:
    """Bit positions the k double-hashing functions assign to one element."""
    data = element.encode("utf-8")
    h1 = _keyed_int(data, key1)
    h2 = _keyed_int(data, key2)
    return tuple((h1 + i * h2) % l for i in range(1, k + 1))


def gram_positions(gram: str, params: BloomParams) -> tuple[int, ...]:
    return element_positions(gram, params.l, params.k, params.hash_key_1, params.hash_key_2)


def encode_grams(grams: Iterable[str], params: BloomParams) -> BloomFilter:
    bits = np.zeros(params.l, dtype=bool)
    for gram in grams:
        bits[list(gram_positions(gram, params))] = True
    return BloomFilter.from_bits(bits)


def encode_clk(record_qids: Sequence[str], params: BloomParams) -> BloomFilter:
    """Hash the q-grams of all QID values of one record into a single filter."""
    grams = record_qgrams(record_qids, params.q)
    if not grams:
        raise EncodingError(f"record {list(record_qids)!r} has no {params.q}-grams to encode")
    return encode_grams(grams, params)


def encode_many(records: Sequence[Sequence[str]], params: BloomParams) -> np.ndarray:
    """Encode many records into an ``N x l`` boolean matrix.

    Raises :class:`EncodingError` naming the first unencodable row.
    """
    out = np.zeros((len(records), params.l), dtype=bool)
    for row, values in enumerate(records):
        grams = record_qgrams(values, params.q)
        if not grams:
            raise EncodingError(f"record at row {row} has no {params.q}-grams to encode")
        idx = [p for gram in grams for p in gram_positions(gram, params)]
        out[row, idx] = True
    return out


def _check_lengths(filters: Sequence[BloomFilter]):
    lengths = {len(f) for f in filters}
    if len(lengths) > 1:
        raise ValueError(f"Bloom filters differ in length: {sorted(lengths)}")


def dice_pair(b1: BloomFilter, b2: BloomFilter) -> float:
    _check_lengths([b1, b2])
    total = b1.ones + b2.ones
    if total == 0:
        return 0.0
    common = int(np.count_nonzero(b1.bits & b2.bits))
    return 2 * common / total


def dice_multi(filters: Sequence[BloomFilter]) -> float:
    """Dice similarity of P filters: ``P * c / sum(x_i)``."""
    if len(filters) < 2:
        raise ValueError("dice_multi needs at least two filters")
    _check_lengths(filters)
    total = sum(f.ones for f in filters)
    if total == 0:
        return 0.0
    common = np.logical_and.reduce([f.bits for f in filters])
    return len(filters) * int(np.count_nonzero(common)) / total


def dice_from_counts(parties: int, common, total):
    """``P * c / x`` with 0 where ``x == 0``; works on scalars and arrays."""
    common = np.asarray(common, dtype=np.float64)
    total = np.asarray(total, dtype=np.float64)
    out = np.zeros(np.broadcast(common, total).shape)
    np.divide(parties * common, total, out=out, where=total > 0)
    return out if out.ndim else float(out)


def split(b: BloomFilter, parties: int, pad: bool = False) -> list[Segment]:
    """Cut ``b`` into ``parties`` contiguous equal segments.

    With ``pad`` the filter is first extended with zero bits up to the next
    multiple of ``parties``; otherwise an indivisible length is an error.
    """
    l = len(b)
    if parties < 1:
        raise ValueError("need at least one segment")
    if l % parties:
        if not pad:
            raise ValueError(f"length {l} is not divisible into {parties} segments")
        bits = np.concatenate([b.bits, np.zeros(parties - l % parties, dtype=bool)])
    else:
        bits = b.bits
    size = bits.size // parties
    return [Segment(i + 1, bits[i * size:(i + 1) * size].copy()) for i in range(parties)]


def join(segments: Sequence[Segment], l: int | None = None) -> BloomFilter:
    """Inverse of :func:`split`; ``l`` drops trailing padding."""
    bits = np.concatenate([s.bits for s in sorted(segments, key=lambda s: s.index)])
    if l is not None:
        if bits[l:].any():
            raise ValueError("padding bits are set")
        bits = bits[:l]
    return BloomFilter.from_bits(bits)


def conjunct(segments: Sequence[Segment]) -> Segment:
    if not segments:
        raise ValueError("cannot conjunct an empty list of segments")
    if len({len(s) for s in segments}) > 1:
        raise ValueError("segments differ in length")
    if len({s.index for s in segments}) > 1:
        raise ValueError("segments come from different positions")
    return Segment(segments[0].index, np.logical_and.reduce([s.bits for s in segments]))


def optimal_k(l: int, n_grams: float) -> int:
    """Hash count ``round(l / Q * ln 2)`` minimising the false positive rate."""
    if l <= 0 or n_grams <= 0:
        raise ValueError("l and Q must be positive")
    return max(1, math.floor(l / n_grams * math.log(2) + 0.5))


def false_positive_rate(l: int, n_grams: float) -> float:
    if l <= 0 or n_grams <= 0:
        raise ValueError("l and Q must be positive")
    return (1.0 / 2 ** math.log(2)) ** (l / n_grams)


# -- packed representation used by the protocol --------------------------------

def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack an ``N x m`` boolean matrix into ``N x ceil(m/64)`` uint64 words.

    Bit 0 of byte 0 is column 0 (little-endian bit order).
    """
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    packed = np.packbits(bits, axis=1, bitorder="little")
    width = -(-packed.shape[1] // 8) * 8
    if width != packed.shape[1]:
        packed = np.pad(packed, ((0, 0), (0, width - packed.shape[1])))
    return np.ascontiguousarray(packed).view(np.uint64)


def popcount_rows(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


def segment_matrix(filters: np.ndarray, params: BloomParams, index: int) -> np.ndarray:
    """Columns of segment ``index`` (1-based) of an ``N x l`` filter matrix."""
    size = params.segment_length
    lo = (index - 1) * size
    cols = filters[:, lo:min(lo + size, params.l)]
    if cols.shape[1] < size:
        cols = np.pad(cols, ((0, 0), (0, size - cols.shape[1])))
    return cols
