"""Ring-based secure summation of per-candidate integer pairs.

The initiator adds private random offsets to its own values, every other
party adds its values as the running vector travels round the ring, and
the initiator removes the offsets at the end. Only :func:`unmask`, which
needs the offsets, ever returns plain sums.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

OFFSET_BOUND = 2 ** 31
# partial counts are bounded by P * l; this leaves ample headroom in int64
_MAX_ABS = 2 ** 62


class ProtocolError(RuntimeError):
    """A party received something inconsistent with the protocol state."""


def keys_digest(keys) -> bytes:
    digest = getattr(keys, "digest", None)
    if callable(digest):
        return digest()
    h = hashlib.sha256()
    for key in keys:
        h.update(repr(key).encode("utf-8"))
        h.update(b"\x00")
    return h.digest()


def _same_keys(a, b) -> bool:
    if a is b:
        return True
    return len(a) == len(b) and keys_digest(a) == keys_digest(b)


def _key_diff(a, b, limit=5) -> str:
    try:
        sa, sb = set(a), set(b)
    except TypeError:
        return f"{len(a)} vs {len(b)} keys"
    only_a = sorted(map(repr, sa - sb))[:limit]
    only_b = sorted(map(repr, sb - sa))[:limit]
    return f"{len(a)} vs {len(b)} keys; only in first: {only_a}; only in second: {only_b}"


def _as_counts(values, n) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {arr.shape}")
    if n and np.abs(arr).max() >= _MAX_ABS:
        raise OverflowError("partial counts exceed the safe accumulation range")
    return arr


@dataclass(frozen=True)
class RandomOffsets:
    """Per-candidate masks held by the initiator only."""

    r_c: np.ndarray
    r_x: np.ndarray

    def __len__(self):
        return len(self.r_c)


def draw_offsets(n: int, rng: np.random.Generator, bound: int = OFFSET_BOUND) -> RandomOffsets:
    return RandomOffsets(rng.integers(0, bound, size=n, dtype=np.int64),
                         rng.integers(0, bound, size=n, dtype=np.int64))


@dataclass(frozen=True)
class MaskedVector:
    keys: Sequence
    masked_c: np.ndarray
    masked_x: np.ndarray
    hops: int = 1

    def __len__(self):
        return len(self.keys)

    def digest(self) -> bytes:
        return keys_digest(self.keys)


def init_masked(keys: Sequence, own_c, own_x, offsets: RandomOffsets) -> MaskedVector:
    n = len(keys)
    if len(offsets) != n:
        raise ProtocolError(f"offsets cover {len(offsets)} candidates, expected {n}")
    c = _as_counts(own_c, n)
    x = _as_counts(own_x, n)
    return MaskedVector(keys, offsets.r_c + c, offsets.r_x + x, hops=1)


def add_own(incoming: MaskedVector, keys: Sequence, own_c, own_x) -> MaskedVector:
    if not _same_keys(incoming.keys, keys):
        raise ProtocolError("candidate key sets differ: " + _key_diff(incoming.keys, keys))
    n = len(keys)
    c = _as_counts(own_c, n)
    x = _as_counts(own_x, n)
    return MaskedVector(incoming.keys, incoming.masked_c + c, incoming.masked_x + x,
                        hops=incoming.hops + 1)


def unmask(final: MaskedVector, offsets: RandomOffsets, parties: int) -> tuple[np.ndarray, np.ndarray]:
    """Remove the offsets; returns ``(sum_c, sum_x)`` per candidate."""
    if final.hops != parties:
        raise ProtocolError(f"vector made {final.hops} hops, expected {parties}")
    if len(offsets) != len(final):
        raise ProtocolError("offsets do not match the returned vector")
    return final.masked_c - offsets.r_c, final.masked_x - offsets.r_x


def ring_sum(keys: Sequence, values: Sequence[tuple], rng: np.random.Generator,
             initiator: int = 0, on_hop=None) -> tuple[np.ndarray, np.ndarray]:
    """Run the full ring over ``values[i] = (c_i, x_i)`` arrays of each party.

    The ring starts and ends at ``initiator`` and visits parties in
    increasing (cyclic) order. ``on_hop(sender, receiver, vector)`` is
    called for every transmitted vector, including the return to the
    initiator.
    """
    parties = len(values)
    offsets = draw_offsets(len(keys), rng)
    vec = init_masked(keys, *values[initiator], offsets)
    sender = initiator
    for step in range(1, parties):
        receiver = (initiator + step) % parties
        if on_hop:
            on_hop(sender, receiver, vec)
        vec = add_own(vec, keys, *values[receiver])
        sender = receiver
    if on_hop:
        on_hop(sender, initiator, vec)
    return unmask(vec, offsets, parties)
