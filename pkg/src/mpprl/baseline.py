"""Exact-matching multi-party baseline over conjuncted Bloom filters.

Each party hashes every record's concatenated QID string, as a single
element, into one Bloom filter per block. Parties exchange segments, each
party ANDs the segments it receives, the conjuncted segments are
exchanged all-to-all and concatenated, and a record matches when all its
bits are set in the final filter.

Sets of records are formed from matching records whose masked values are
identical across all parties, i.e. exact matching of masked QIDs.
"""

from __future__ import annotations

import itertools
import resource
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import bloom
from .blocking import blocking_key, common_blocks
from .bloom import BloomParams
from .datagen import FIELDS
from .messages import MessageBus, SegmentBatch
from .protocol import RunReport, _run_id
from .securesum import ProtocolError


def value_string(record, qid_attrs) -> str:
    return " ".join(bloom.normalise(v) for v in record.values(qid_attrs))


def value_filter(value: str, params: BloomParams) -> bloom.BloomFilter:
    positions = bloom.element_positions(value, params.l, params.k, params.hash_key_1, params.hash_key_2)
    return bloom.BloomFilter.from_positions(positions, params.l)


@dataclass
class PartyFilter:
    """One party's filter for one block and the per-value filters behind it."""

    filter: np.ndarray  # l bits, OR of all value filters
    values: dict  # rid -> l-bit value filter

    @classmethod
    def build(cls, value_filters: dict, l: int) -> "PartyFilter":
        acc = np.zeros(l, dtype=bool)
        for bits in value_filters.values():
            acc |= bits
        return cls(acc, value_filters)


@dataclass
class LaiResult:
    matched: list[list[str]]  # per party, matching rids
    tuples: set[tuple[str, ...]]
    report: RunReport
    final_filters: dict = field(default_factory=dict)  # bkv -> final l-bit filter


def _record(report, step, t0):
    report.runtime_ms_per_step[step] = 1000 * (time.perf_counter() - t0)
    report.max_rss_kb_per_step[step] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss


def lai_link(databases, params: BloomParams, qid_attrs=FIELDS, blocking_attrs=("surname",),
             bus: MessageBus | None = None, seed: int = 0) -> LaiResult:
    """Run the baseline over ``databases``.

    With ``blocking_attrs=None`` every party builds a single filter over
    all its values.
    """
    n = len(databases)
    if n < 3:
        raise ValueError("the baseline needs at least three parties")
    if n != params.parties:
        raise ProtocolError(f"{n} databases given, parameters agreed for {params.parties} parties")
    bus = bus or MessageBus()
    run_id = _run_id(seed)
    report = RunReport("lai", n, [len(db) for db in databases])
    t0 = time.perf_counter()

    # per party: bkv -> {rid: value bits}
    blocks = []
    digests = []
    for db in databases:
        by_block = defaultdict(dict)
        digest = {}
        for rec in db:
            value = value_string(rec, qid_attrs)
            bkv = blocking_key(rec.attrs, blocking_attrs) if blocking_attrs else ""
            bits = value_filter(value, params).bits
            by_block[bkv][rec.rid] = bits
            digest[rec.rid] = np.packbits(bits).tobytes()
        blocks.append({k: PartyFilter.build(v, params.l) for k, v in by_block.items()})
        digests.append(digest)
    _record(report, "prepare", t0)

    t0 = time.perf_counter()
    common = common_blocks(blocks)
    seg_len = params.segment_length
    # segment exchange: party j sends segment i of all its block filters to party i
    for j in range(n):
        mat = np.stack([blocks[j][bkv].filter for bkv in common]) if common else np.zeros((0, params.l), bool)
        for i in range(n):
            if i != j:
                bits = bloom.segment_matrix(mat, params, i + 1)
                bus.send(SegmentBatch(run_id, j, i, i + 1, seg_len,
                                      tuple(b"\x00" * 16 for _ in common), tuple(common), bits))
    conjuncted = []
    for i in range(n):
        own = bloom.segment_matrix(
            np.stack([blocks[i][bkv].filter for bkv in common]) if common else np.zeros((0, params.l), bool),
            params, i + 1)
        acc = own.copy()
        for j in range(n):
            if j != i:
                acc &= bus.receive(i, SegmentBatch).bits
        conjuncted.append(acc)
    # conjuncted segments go to every other party
    for i in range(n):
        for j in range(n):
            if j != i:
                bus.send(SegmentBatch(run_id, i, j, i + 1, seg_len,
                                      tuple(b"\x00" * 16 for _ in common), tuple(common), conjuncted[i]))
    finals = []
    for j in range(n):
        parts = [None] * n
        parts[j] = conjuncted[j]
        for i in range(n):
            if i != j:
                msg = bus.receive(j, SegmentBatch)
                parts[msg.index - 1] = msg.bits
        finals.append(np.concatenate(parts, axis=1)[:, :params.l] if common else np.zeros((0, params.l), bool))
    for f in finals[1:]:
        if not np.array_equal(f, finals[0]):
            raise ProtocolError("parties assembled different final filters")
    _record(report, "exchange", t0)

    t0 = time.perf_counter()
    final_filters = {bkv: finals[0][b] for b, bkv in enumerate(common)}
    matched = []
    for j in range(n):
        hits = []
        for bkv in common:
            final = final_filters[bkv]
            for rid, bits in blocks[j][bkv].values.items():
                if not (bits & ~final).any():
                    hits.append(rid)
        matched.append(hits)

    tuples = set()
    for bkv in common:
        groups = [defaultdict(list) for _ in range(n)]
        for j in range(n):
            hit = set(matched[j])
            for rid in blocks[j][bkv].values:
                if rid in hit:
                    groups[j][digests[j][rid]].append(rid)
        shared = set(groups[0])
        for g in groups[1:]:
            shared &= set(g)
        for d in shared:
            tuples.update(itertools.product(*(g[d] for g in groups)))
    _record(report, "match", t0)
    report.candidates_total = report.candidates_after_filter = len(common)
    report.matches = len(tuples)
    report.messages = dict(bus.messages, total=bus.total_messages)
    report.bytes = dict(bus.bytes, total=bus.total_bytes)
    report.segment_payload_bytes = bus.segment_payload_bytes
    report.configured_k = params.k
    report.notes.append("exact matching: each record's concatenated QID string is hashed as one element")
    return LaiResult(matched, tuples, report, final_filters)
