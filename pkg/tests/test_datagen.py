import random
import string

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpprl import datagen
from mpprl.datagen import FIELDS, GenSpec, corrupt


def test_reproducible():
    a = datagen.generate(GenSpec(n_records=200, corrupt_fraction=0.3, seed=5))
    b = datagen.generate(GenSpec(n_records=200, corrupt_fraction=0.3, seed=5))
    assert a.databases == b.databases and a.truth == b.truth


def test_shape_and_truth():
    spec = GenSpec(parties=4, n_records=300, overlap=0.5, seed=1)
    data = datagen.generate(spec)
    assert [len(db) for db in data.databases] == [300] * 4
    assert len(data.truth) == 150
    by_rid = [{r.rid: r for r in db} for db in data.databases]
    for t in data.truth:
        recs = [by_rid[j][rid] for j, rid in enumerate(t)]
        assert all(r.attrs == recs[0].attrs for r in recs)


def test_non_overlap_records_are_distinct():
    data = datagen.generate(GenSpec(n_records=400, overlap=0.25, seed=2))
    in_truth = {rid for t in data.truth for rid in t}
    rest = [tuple(r.values(FIELDS)) for db in data.databases for r in db if r.rid not in in_truth]
    assert len(rest) == len(set(rest)) == 3 * 300


@pytest.mark.parametrize("mode", ["record", "entity"])
def test_corruption_never_hits_every_copy(mode):
    spec = GenSpec(corrupt_fraction=0.9, corrupt_mode=mode)
    hits = datagen._corrupted_parties(spec, random.Random(3), 5000)
    assert all(len(h) < spec.parties for h in hits)
    assert any(h for h in hits)


def test_record_mode_rate():
    hits = datagen._corrupted_parties(GenSpec(corrupt_fraction=0.2), random.Random(4), 40_000)
    # a tuple stays clean when no copy is hit: 0.8^3 = 0.512
    clean = sum(not h for h in hits) / len(hits)
    assert abs(clean - 0.512) < 0.01


def test_corrupted_copies_differ():
    data = datagen.generate(GenSpec(n_records=500, corrupt_fraction=0.3, seed=3))
    by_rid = {r.rid: r for db in data.databases for r in db}
    dirty = sum(len({tuple(by_rid[rid].values(FIELDS)) for rid in t}) > 1 for t in data.truth)
    assert 0 < dirty < len(data.truth)


def test_entity_mode_count():
    data = datagen.generate(GenSpec(n_records=1000, corrupt_fraction=0.2, corrupt_mode="entity", seed=4))
    by_rid = {r.rid: r for db in data.databases for r in db}
    dirty = sum(len({tuple(by_rid[rid].values(FIELDS)) for rid in t}) > 1 for t in data.truth)
    assert dirty == 100


@given(st.text(alphabet="abcdefghij", min_size=1, max_size=12), st.integers(1, 3), st.integers(0, 10 ** 6))
def test_corrupt_changes_value(value, n_ops, seed):
    out = corrupt(value, n_ops, seed)
    assert out != value
    assert abs(len(out) - len(value)) <= n_ops


def test_corrupt_numeric_stays_numeric():
    rng = random.Random(0)
    for _ in range(200):
        assert corrupt("27601", 2, rng).isdigit()


def test_corrupt_single_char():
    assert corrupt("a", 1, 0) != "a"


@pytest.mark.parametrize("kw", [dict(parties=1), dict(n_records=0), dict(overlap=1.5),
                                dict(corrupt_fraction=-0.1), dict(max_ops=4), dict(corrupt_mode="x")])
def test_invalid_settings(kw):
    with pytest.raises(ValueError):
        datagen.generate(GenSpec(**kw))


def test_lexicon_capacity():
    lex = {"given_name": ("a",), "surname": ("b", "c"), "suburb": ("d",), "postcode": ("1",)}
    with pytest.raises(ValueError):
        datagen.generate(GenSpec(n_records=10, lexicons=lex))


def test_csv_roundtrip(tmp_path):
    data = datagen.generate(GenSpec(n_records=50, seed=9))
    paths = datagen.write_dataset(data, tmp_path)
    assert [p.name for p in paths] == ["party_1.csv", "party_2.csv", "party_3.csv"]
    assert datagen.read_records(paths[1]) == data.databases[1]
    assert datagen.read_truth(tmp_path / "truth.csv") == data.truth
    assert b"\r\n" not in paths[0].read_bytes()


def osa_distance(a, b):
    """Edit distance with adjacent transpositions (optimal string alignment)."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            cost = a[i - 1] != b[j - 1]
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                d[i][j] = min(d[i][j], d[i - 2][j - 2] + 1)
    return d[len(a)][len(b)]


def damerau_distance(a, b):
    """Unrestricted Damerau-Levenshtein distance, a metric unlike OSA."""
    inf = len(a) + len(b)
    last_row = {}
    d = [[inf] * (len(b) + 2) for _ in range(len(a) + 2)]
    for i in range(len(a) + 1):
        d[i + 1][1] = i
    for j in range(len(b) + 1):
        d[1][j + 1] = j
    for i in range(1, len(a) + 1):
        last_col = 0
        for j in range(1, len(b) + 1):
            k, l = last_row.get(b[j - 1], 0), last_col
            cost = a[i - 1] != b[j - 1]
            if not cost:
                last_col = j
            d[i + 1][j + 1] = min(d[i][j] + cost, d[i + 1][j] + 1, d[i][j + 1] + 1,
                                  d[k][l] + (i - k - 1) + 1 + (j - l - 1))
        last_row[a[i - 1]] = i
    return d[len(a) + 1][len(b) + 1]


def test_single_edit_distance_is_one():
    rng = random.Random(11)
    for value in ["peter", "smith", "raleigh", "27601", "ab"]:
        for _ in range(200):
            assert osa_distance(value, corrupt(value, 1, rng)) == 1


def test_multi_edit_distance_bounded():
    rng = random.Random(12)
    for _ in range(1000):
        value = rng.choice(["margaret", "williams", "fuquay varina", "28801"])
        n = rng.randint(1, 3)
        out = corrupt(value, n, rng)
        assert out != value
        assert 1 <= damerau_distance(value, out) <= n


def test_distances_agree_on_known_pairs():
    assert osa_distance("ca", "abc") == 3
    assert damerau_distance("ca", "abc") == 2
    assert damerau_distance("peter", "pete") == osa_distance("peter", "pete") == 1


def test_no_overlap_no_truth():
    data = datagen.generate(GenSpec(n_records=50, overlap=0.0, corrupt_fraction=0.4, seed=1))
    assert data.truth == set()


def test_clean_overlap_is_byte_identical():
    data = datagen.generate(GenSpec(n_records=100, overlap=0.5, seed=1))
    by_rid = {r.rid: r for db in data.databases for r in db}
    assert len(data.truth) == 50
    assert all(len({tuple(by_rid[rid].values(FIELDS)) for rid in t}) == 1 for t in data.truth)


def test_single_ops():
    rng = random.Random(0)
    assert datagen._apply_op("ab", "transpose", rng, "abc") == "ba"
    out = datagen._apply_op("peter", "substitute", rng, string.ascii_lowercase)
    assert len(out) == 5 and sum(a != b for a, b in zip(out, "peter")) == 1
