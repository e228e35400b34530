import numpy as np
import pytest

from mpprl.bloom import BloomParams
from mpprl.datagen import Record


def make_record(rid, given, surname, suburb="raleigh", postcode="27601"):
    return Record(rid, {"given_name": given, "surname": surname, "suburb": suburb, "postcode": postcode})


@pytest.fixture
def params():
    return BloomParams(l=60, k=3, q=2, parties=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def running_example():
    """Three databases with the block structure of the worked example.

    RA1, RA2, RB1, RB2 and RC1 share a Soundex block; RC2 does not.
    """
    d1 = [make_record("RA1", "peter", "smith"), make_record("RA2", "john", "smyth", "durham", "27701")]
    d2 = [make_record("RB1", "mary", "smithe", "cary", "27511"), make_record("RB2", "peter", "smith")]
    d3 = [make_record("RC1", "pete", "smith"), make_record("RC2", "peter", "jones")]
    return [d1, d2, d3]


def interval_party(index, params, members):
    """A party whose filters repeat the same bit interval in every segment.

    ``members`` maps rid -> (start, stop); all records share one block.
    """
    from mpprl.protocol import Party
    seg = params.segment_length
    rids = list(members)
    filters = np.zeros((len(rids), params.l), dtype=bool)
    for r, rid in enumerate(rids):
        start, stop = members[rid]
        for s in range(params.parties):
            filters[r, s * seg + start:s * seg + stop] = True
    pseudonyms = [bytes([index, r]) * 8 for r in range(len(rids))]
    return Party(index, params, rids, pseudonyms, filters, ["S530"] * len(rids))


def filtering_example():
    """Block sizes 2, 2, 3 where only the prefix (RA1, RB2) fails s_m = 0.8.

    Segment similarity of RA1 and RB2 is 2 * 14 / 40 = 0.7; every other
    prefix and every full candidate stays at or above 0.8.
    """
    params = BloomParams(l=120, k=1, q=2, parties=3)
    spec = [
        {"RA1": (0, 20), "RA2": (3, 23)},
        {"RB1": (0, 22), "RB2": (6, 26)},
        {"RC1": (3, 22), "RC2": (2, 23), "RC3": (3, 23)},
    ]
    return params, [interval_party(i, params, m) for i, m in enumerate(spec)]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
