import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpprl import securesum
from mpprl.securesum import (ProtocolError, RandomOffsets, add_own, init_masked,
                             ring_sum, unmask)

KEYS = [("S530", (b"a", b"b", b"c"))]


def fixed_offsets(r):
    return RandomOffsets(np.array([r], dtype=np.int64), np.array([r], dtype=np.int64))


def test_worked_instance():
    # three parties holding 11, 7 and 15, initiator offset 20
    offsets = fixed_offsets(20)
    v = init_masked(KEYS, [11], [11], offsets)
    assert v.masked_c.tolist() == [31]
    v = add_own(v, KEYS, [7], [7])
    assert v.masked_c.tolist() == [38]
    v = add_own(v, KEYS, [15], [15])
    assert v.masked_c.tolist() == [53]
    c, _ = unmask(v, offsets, 3)
    assert c.tolist() == [33]


@settings(max_examples=200)
@given(st.integers(3, 8), st.integers(1, 20), st.integers(0, 2 ** 32 - 1), st.data())
def test_matches_plain_sum(parties, n, seed, data):
    rng = np.random.default_rng(seed)
    keys = list(range(n))
    values = [(rng.integers(0, 500, n), rng.integers(0, 500, n)) for _ in range(parties)]
    initiator = data.draw(st.integers(0, parties - 1))
    c, x = ring_sum(keys, values, rng, initiator=initiator)
    assert c.tolist() == sum(v[0] for v in values).tolist()
    assert x.tolist() == sum(v[1] for v in values).tolist()


def test_intermediate_views_are_masked():
    rng = np.random.default_rng(7)
    keys = list(range(1000))
    values = [(np.full(1000, 5), np.full(1000, 9)) for _ in range(3)]
    seen = []
    ring_sum(keys, values, rng, on_hop=lambda s, r, v: seen.append((s, r, v.masked_c.copy())))
    assert [(s, r) for s, r, _ in seen] == [(0, 1), (1, 2), (2, 0)]
    # the first receiver sees own + offset, spread over the offset range
    first = seen[0][2] - 5
    assert first.min() >= 0 and first.max() < securesum.OFFSET_BOUND
    assert len(np.unique(first)) > 990


def test_offsets_in_range():
    off = securesum.draw_offsets(10_000, np.random.default_rng(0))
    assert off.r_c.min() >= 0 and off.r_c.max() < 2 ** 31
    assert off.r_x.dtype == np.int64


def test_key_mismatch():
    v = init_masked(KEYS, [1], [1], fixed_offsets(3))
    with pytest.raises(ProtocolError, match="differ"):
        add_own(v, [("S531", (b"a", b"b", b"c"))], [1], [1])


def test_hop_count_checked():
    offsets = fixed_offsets(3)
    v = add_own(init_masked(KEYS, [1], [1], offsets), KEYS, [1], [1])
    with pytest.raises(ProtocolError):
        unmask(v, offsets, 3)


def test_offsets_length_checked():
    with pytest.raises(ProtocolError):
        init_masked(KEYS * 2, [1, 1], [1, 1], fixed_offsets(3))


def test_shape_and_overflow():
    with pytest.raises(ValueError):
        init_masked(KEYS, [1, 2], [1], fixed_offsets(0))
    with pytest.raises(OverflowError):
        init_masked(KEYS, [2 ** 62], [1], fixed_offsets(0))


def test_empty_vector():
    c, x = ring_sum([], [(np.zeros(0), np.zeros(0))] * 3, np.random.default_rng(0))
    assert len(c) == len(x) == 0


def test_zero_offsets_and_zero_values():
    zero = fixed_offsets(0)
    assert init_masked(KEYS, [5], [6], zero).masked_c.tolist() == [5]
    assert init_masked(KEYS, [0], [0], fixed_offsets(17)).masked_x.tolist() == [17]
    v = init_masked(KEYS, [5], [6], zero)
    assert add_own(v, KEYS, [0], [0]).masked_c.tolist() == [5]
    c, x = unmask(add_own(add_own(v, KEYS, [0], [0]), KEYS, [0], [0]), zero, 3)
    assert (c.tolist(), x.tolist()) == ([5], [6])


def test_candidate_partials():
    c, x = ring_sum(["cand"], [([2], [8]), ([1], [7]), ([1], [8])], np.random.default_rng(0))
    assert (c.tolist(), x.tolist()) == ([4], [23])


def test_middle_order_irrelevant():
    offsets = fixed_offsets(9)
    a = add_own(add_own(init_masked(KEYS, [1], [1], offsets), KEYS, [2], [2]), KEYS, [3], [3])
    b = add_own(add_own(init_masked(KEYS, [1], [1], offsets), KEYS, [3], [3]), KEYS, [2], [2])
    assert unmask(a, offsets, 3)[0].tolist() == unmask(b, offsets, 3)[0].tolist() == [6]


def test_five_parties_random():
    rng = np.random.default_rng(5)
    values = [(rng.integers(0, 100, 30), rng.integers(0, 100, 30)) for _ in range(5)]
    c, x = ring_sum(range(30), values, rng)
    assert c.tolist() == [sum(int(v[0][i]) for v in values) for i in range(30)]
