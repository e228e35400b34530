"""Multi-party approximate linkage over Bloom filter segments.

Each party encodes its records into CLK Bloom filters, blocks them by
Soundex codes, and sends segment ``j`` of every filter to party ``j``.
Party ``i`` then counts, for every candidate set (one record per party
sharing a blocking key), the common 1-bits ``c_i`` in segment ``i``. The
sums ``c = sum(c_i)`` and ``x = sum(x_i)`` are obtained by ring secure
summation and the initiator classifies ``P * c / x`` against ``s_t``.

With a segment threshold ``s_m`` each party prunes candidate prefixes
whose segment similarity drops below ``s_m`` while folding parties in
order. Parties then intersect their survivor sets in one extra ring pass
so the secure summation runs over aligned candidates.

All parties are simulated in one process and talk only through a
:class:`~mpprl.messages.MessageBus`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import resource
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bloom, securesum
from .blocking import blocking_key, common_blocks
from .bloom import BloomParams, EncodingError
from .datagen import FIELDS
from .messages import (MaskedVectorMsg, MatchBroadcast, MessageBus, SegmentBatch,
                       SurvivorMask)
from .securesum import ProtocolError

log = logging.getLogger(__name__)


class LinkageError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"linkage failed in step {step!r}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class ProtocolConfig:
    params: BloomParams = field(default_factory=BloomParams)
    s_t: float = 0.8
    s_m: float | None = None
    qid_attrs: tuple[str, ...] = FIELDS
    blocking_attrs: tuple[str, ...] = ("surname",)
    seed: int = 0
    rotate_initiator: bool = False
    threads: bool = False
    roundtrip: bool = False

    def __post_init__(self):
        if not 0.0 < self.s_t <= 1.0:
            raise ValueError(f"s_t must be in (0, 1], got {self.s_t}")
        # s_m = 0 is accepted: it never prunes, which makes it a useful control
        if self.s_m is not None and not 0.0 <= self.s_m <= 1.0:
            raise ValueError(f"s_m must be in [0, 1], got {self.s_m}")

    @property
    def parties(self) -> int:
        return self.params.parties

    @property
    def filtering(self) -> bool:
        return self.s_m is not None


# -- party state -------------------------------------------------------------

class Party:
    """State private to one database owner."""

    def __init__(self, index, params, rids, pseudonyms, filters, bkvs, skipped=0):
        self.index = index
        self.params = params
        self.rids = list(rids)
        self.pseudonyms = list(pseudonyms)
        self.filters = filters
        self.filters.setflags(write=False)
        self.ones = filters.sum(axis=1, dtype=np.int64)
        self.bkvs = list(bkvs)
        self.skipped = skipped
        self._rid_of = dict(zip(self.pseudonyms, self.rids))

    def __len__(self):
        return len(self.rids)

    def resolve(self, pseudonym: bytes) -> str:
        return self._rid_of[pseudonym]

    def share(self, recipient: int, run_id: bytes) -> SegmentBatch:
        """Segment ``recipient + 1`` of every filter, with pseudonyms and BKVs."""
        bits = bloom.segment_matrix(self.filters, self.params, recipient + 1)
        return SegmentBatch(run_id, self.index, recipient, recipient + 1, bits.shape[1],
                            tuple(self.pseudonyms), tuple(self.bkvs), bits)

    def filter_of(self, pseudonym: bytes) -> bloom.BloomFilter:
        row = self.pseudonyms.index(pseudonym)
        return bloom.BloomFilter.from_bits(self.filters[row])


def prepare_party(database, config: ProtocolConfig, index: int = 0,
                  rng: np.random.Generator | None = None) -> Party:
    """Encode and pseudonymise one party's records, keeping their blocking keys."""
    if not database:
        raise ValueError(f"party {index + 1} has an empty database")
    rng = rng if rng is not None else np.random.default_rng([config.seed, index])
    params = config.params
    rids, rows, bkvs = [], [], []
    skipped = 0
    for rec in database:
        values = rec.values(config.qid_attrs)
        try:
            grams = bloom.record_qgrams(values, params.q)
            if not grams:
                raise EncodingError(rec.rid)
        except EncodingError:
            skipped += 1
            continue
        rids.append(rec.rid)
        rows.append(grams)
        bkvs.append(blocking_key(rec.attrs, config.blocking_attrs))
    if skipped:
        log.warning("party %d: skipped %d unencodable records", index + 1, skipped)
    if not rids:
        raise ValueError(f"party {index + 1} has no encodable records")
    filters = np.zeros((len(rows), params.l), dtype=bool)
    for r, grams in enumerate(rows):
        filters[r, [p for g in grams for p in bloom.gram_positions(g, params)]] = True
    pseudonyms = [rng.bytes(16) for _ in rids]
    if len(set(pseudonyms)) != len(pseudonyms):
        raise ProtocolError("pseudonym collision")
    return Party(index, params, rids, pseudonyms, filters, bkvs, skipped)


# -- segment exchange ----------------------------------------------------------

def exchange_segments(parties: Sequence[Party], bus: MessageBus, run_id: bytes) -> list[dict]:
    """Send segment ``j`` of every filter to party ``j``.

    Returns one inbox per party mapping sender index to the received
    :class:`SegmentBatch` (a party's own segment is kept locally).
    """
    params = parties[0].params
    for p in parties[1:]:
        if p.params != params:
            raise ProtocolError(f"party {p.index + 1} uses different Bloom filter parameters")
    if len(parties) != params.parties:
        raise ProtocolError(f"{len(parties)} parties present, parameters agreed for {params.parties}")
    n = len(parties)
    for sender in parties:
        for recipient in range(n):
            if recipient != sender.index:
                bus.send(sender.share(recipient, run_id))
    inboxes = []
    for i, party in enumerate(parties):
        inbox = {i: party.share(i, run_id)}
        for j in range(n):
            if j != i:
                inbox[j] = bus.receive(i, SegmentBatch)
        inboxes.append(inbox)
    return inboxes


class _BatchView:
    """A received batch indexed by block, rows sorted by pseudonym."""

    def __init__(self, batch: SegmentBatch):
        self.batch = batch
        self.words = bloom.pack_rows(batch.bits)
        self.seg_ones = bloom.popcount_rows(self.words)
        rows = {}
        order = sorted(range(len(batch.pseudonyms)), key=lambda r: (batch.bkvs[r], batch.pseudonyms[r]))
        for r in order:
            rows.setdefault(batch.bkvs[r], []).append(r)
        self.rows = {k: np.array(v, dtype=np.int64) for k, v in rows.items()}

    def members(self, bkv):
        return tuple(self.batch.pseudonyms[r] for r in self.rows[bkv])


class CandidateIndex(Sequence):
    """Deterministic enumeration of candidate sets, optionally restricted.

    Candidates are ordered by blocking key and then lexicographically by
    the tuple of member pseudonyms, so every party enumerates the same
    sequence. A candidate is ``(bkv, (pseudonym_1, ..., pseudonym_P))``.
    """

    def __init__(self, blocks, mask=None):
        self.blocks = tuple(blocks)
        self.shapes = [tuple(len(m) for m in members) for _, members in self.blocks]
        sizes = [math.prod(s) for s in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes, dtype=np.int64)]).astype(np.int64)
        self.total = int(self.offsets[-1])
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (self.total,):
                raise ValueError("mask does not cover the full enumeration")
            self.positions = np.flatnonzero(mask)
        else:
            self.positions = None
        self.mask = mask
        self._digest = None

    def __len__(self):
        return self.total if self.positions is None else len(self.positions)

    def full_position(self, pos: int) -> int:
        return int(pos if self.positions is None else self.positions[pos])

    def __getitem__(self, pos):
        if isinstance(pos, slice):
            return [self[i] for i in range(*pos.indices(len(self)))]
        if pos < 0:
            pos += len(self)
        full = self.full_position(pos)
        b = int(np.searchsorted(self.offsets, full, side="right")) - 1
        local = np.unravel_index(full - self.offsets[b], self.shapes[b])
        bkv, members = self.blocks[b]
        return bkv, tuple(members[j][int(local[j])] for j in range(len(members)))

    def full_mask(self) -> np.ndarray:
        return np.ones(self.total, dtype=bool) if self.mask is None else self.mask

    def restrict(self, mask) -> "CandidateIndex":
        """Keep candidates where ``mask`` (over the full enumeration) is set."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.total,):
            raise ValueError("mask does not cover the full enumeration")
        return CandidateIndex(self.blocks, self.full_mask() & mask)

    def shard(self, shard: int, n_shards: int) -> "CandidateIndex":
        mask = np.zeros(self.total, dtype=bool)
        full = self.positions if self.positions is not None else np.arange(self.total)
        mask[full[shard::n_shards]] = True
        return CandidateIndex(self.blocks, mask)

    def digest(self) -> bytes:
        if self._digest is None:
            h = hashlib.sha256()
            for bkv, members in self.blocks:
                h.update(bkv.encode("utf-8") + b"\x00")
                for m in members:
                    h.update(len(m).to_bytes(4, "little"))
                    h.update(b"".join(m))
            if self.mask is not None:
                h.update(np.packbits(self.mask).tobytes())
            self._digest = h.digest()
        return self._digest

    def __eq__(self, other):
        if not isinstance(other, CandidateIndex):
            return NotImplemented
        return len(self) == len(other) and self.digest() == other.digest()

    __hash__ = None


@dataclass
class PartialCounts:
    """Output of the per-party counting step, over the full enumeration.

    ``survivors`` marks candidates not pruned by filtering; ``c`` and ``x``
    of pruned candidates are meaningless and set to -1.
    """

    party: int
    index: CandidateIndex
    c: np.ndarray
    x: np.ndarray
    survivors: np.ndarray
    conjunctions: int = 0

    @property
    def compared(self) -> int:
        return int(self.survivors.sum())


def _views(inbox, n):
    return [_BatchView(inbox[j]) for j in range(n)]


def build_candidate_index(views, common_bkvs) -> CandidateIndex:
    return CandidateIndex([(bkv, tuple(v.members(bkv) for v in views)) for bkv in common_bkvs])


def _block_counts(party_index, own_ones, views, bkv, s_m):
    """Plain counting (``s_m`` None) or prefix-filtered counting for one block.

    Returns flat positions of compared candidates within the block product,
    their c_i and x_i, and the number of conjunctions evaluated.
    """
    n_parties = len(views)
    rows = [v.rows[bkv] for v in views]
    acc = views[0].words[rows[0]]
    flat = np.arange(len(rows[0]), dtype=np.int64)
    seg_x = views[0].seg_ones[rows[0]]
    own = np.zeros(len(rows[0]), dtype=np.int64) if party_index else rows[0]
    conjunctions = 0
    for j in range(1, n_parties):
        words = views[j].words[rows[j]]
        n_j = len(rows[j])
        acc = (acc[:, None, :] & words[None, :, :]).reshape(-1, acc.shape[-1])
        flat = (flat[:, None] * n_j + np.arange(n_j)).ravel()
        own = np.repeat(own, n_j) if j != party_index else np.tile(rows[j], len(own))
        conjunctions += len(flat)
        if s_m is not None:
            seg_x = (seg_x[:, None] + views[j].seg_ones[rows[j]][None, :]).ravel()
            seg_c = bloom.popcount_rows(acc)
            # prefixes whose segments are all empty carry no evidence; keep them
            keep = (seg_x == 0) | ((j + 1) * seg_c >= s_m * seg_x)
            if not keep.all():
                acc, flat, seg_x, own = acc[keep], flat[keep], seg_x[keep], own[keep]
    c = bloom.popcount_rows(acc)
    return flat, c, own_ones[own], conjunctions


def compute_partial_counts(party: Party, inbox: dict, common_bkvs=None,
                           s_m: float | None = None) -> PartialCounts:
    """Count common 1-bits in this party's segment for every candidate set.

    With ``s_m`` the prefix filter prunes candidate sets whose running
    segment similarity ``j * seg_c / seg_x`` falls below ``s_m``.
    """
    n = len(inbox)
    views = _views(inbox, n)
    if common_bkvs is None:
        common_bkvs = common_blocks([v.rows for v in views])
    for bkv in common_bkvs:
        for j, v in enumerate(views):
            if bkv not in v.rows:
                raise ProtocolError(f"party {party.index + 1} has no segments of party {j + 1} for block {bkv!r}")
    index = build_candidate_index(views, common_bkvs)
    c = np.full(index.total, -1, dtype=np.int64)
    x = np.full(index.total, -1, dtype=np.int64)
    survivors = np.zeros(index.total, dtype=bool)
    conjunctions = 0
    for b, bkv in enumerate(common_bkvs):
        flat, cb, xb, conj = _block_counts(party.index, party.ones, views, bkv, s_m)
        pos = index.offsets[b] + flat
        c[pos], x[pos] = cb, xb
        survivors[pos] = True
        conjunctions += conj
    return PartialCounts(party.index, index, c, x, survivors, conjunctions)


def compute_partial_counts_filtered(party, inbox, common_bkvs=None, s_m=0.8) -> PartialCounts:
    if s_m is None or not 0.0 <= s_m <= 1.0:
        raise ValueError(f"s_m must be in [0, 1], got {s_m}")
    return compute_partial_counts(party, inbox, common_bkvs, s_m)


def reconcile_survivors(counts: Sequence[PartialCounts], bus: MessageBus, run_id: bytes) -> CandidateIndex:
    """Intersect every party's survivors: a ring pass then a broadcast by the last party."""
    n = len(counts)
    index = counts[0].index
    for pc in counts[1:]:
        if pc.index != index:
            raise ProtocolError(f"party {pc.party + 1} enumerated different candidates")
    digest = index.digest()
    mask = counts[0].survivors
    for i in range(1, n):
        bus.send(SurvivorMask(run_id, i - 1, i, digest, mask))
        msg = bus.receive(i, SurvivorMask)
        if msg.digest != digest:
            raise ProtocolError("survivor mask refers to a different candidate enumeration")
        mask = msg.mask & counts[i].survivors
    for i in range(n - 1):
        bus.send(SurvivorMask(run_id, n - 1, i, digest, mask))
        mask = bus.receive(i, SurvivorMask).mask
    return index.restrict(mask)


# -- secure summation and classification ----------------------------------------

@dataclass(frozen=True)
class MatchResult:
    candidate: tuple  # (bkv, pseudonyms)
    dice: float
    is_match: bool
    rids: tuple | None = None


def classify(keys, c, x, parties: int, s_t: float) -> list[MatchResult]:
    dice = bloom.dice_from_counts(parties, c, x)
    dice = np.atleast_1d(dice)
    return [MatchResult(keys[i], float(dice[i]), bool(dice[i] >= s_t)) for i in range(len(keys))]


def _ring(keys, values, bus, run_id, initiator, rng):
    """One secure-summation ring over ``values[i] = (c_i, x_i)`` via the bus."""
    n = len(values)
    digest = keys.digest()
    offsets = securesum.draw_offsets(len(keys), rng)
    vec = securesum.init_masked(keys, *values[initiator], offsets)
    sender = initiator
    for step in range(1, n + 1):
        receiver = (initiator + step) % n
        bus.send(MaskedVectorMsg(run_id, sender, receiver, vec.hops, digest, vec.masked_c, vec.masked_x))
        msg = bus.receive(receiver, MaskedVectorMsg)
        if msg.digest != digest:
            raise ProtocolError(f"party {receiver + 1} received a vector for other candidates")
        vec = securesum.MaskedVector(keys, msg.masked_c, msg.masked_x, msg.hops)
        if receiver != initiator:
            vec = securesum.add_own(vec, keys, *values[receiver])
        sender = receiver
    return securesum.unmask(vec, offsets, n)


def run_secure_sum(counts: Sequence[PartialCounts], keys: CandidateIndex, bus: MessageBus,
                   run_id: bytes, rngs, initiator: int = 0):
    """Secure sums of c_i and x_i over ``keys`` (aligned candidates)."""
    values = []
    for pc in counts:
        if pc.index.digest() != CandidateIndex(keys.blocks).digest():
            raise ProtocolError(f"party {pc.party + 1} holds counts for other candidates")
        sel = keys.positions if keys.positions is not None else slice(None)
        if not pc.survivors[sel].all():
            missing = np.flatnonzero(~pc.survivors[sel])[:5]
            raise ProtocolError(f"party {pc.party + 1} has no counts for candidates {missing.tolist()}")
        values.append((pc.c[sel], pc.x[sel]))
    return _ring(keys, values, bus, run_id, initiator, rngs[initiator])


# -- report ------------------------------------------------------------------

@dataclass
class RunReport:
    mode: str
    parties: int
    records: list[int]
    candidates_total: int = 0
    candidates_after_filter: int = 0
    compared_per_party: list[int] = field(default_factory=list)
    conjunctions_per_party: list[int] = field(default_factory=list)
    messages: dict = field(default_factory=dict)
    bytes: dict = field(default_factory=dict)
    segment_payload_bytes: int = 0
    matches: int = 0
    runtime_ms_per_step: dict = field(default_factory=dict)
    max_rss_kb_per_step: dict = field(default_factory=dict)
    mean_grams: float = 0.0
    configured_k: int = 0
    implied_optimal_k: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def runtime_ms(self) -> float:
        return sum(self.runtime_ms_per_step.values())

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "parties": self.parties,
            "records": self.records,
            "candidates_total": self.candidates_total,
            "candidates_after_filter": self.candidates_after_filter,
            "compared_per_party": self.compared_per_party,
            "conjunctions_per_party": self.conjunctions_per_party,
            "messages": dict(self.messages),
            "bytes": dict(self.bytes),
            "segment_payload_bytes": self.segment_payload_bytes,
            "matches": self.matches,
            "runtime_ms_per_step": self.runtime_ms_per_step,
            "max_rss_kb_per_step": self.max_rss_kb_per_step,
            "mean_grams": self.mean_grams,
            "configured_k": self.configured_k,
            "implied_optimal_k": self.implied_optimal_k,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    lines.append(f"{key}.{sub}={v}")
            elif isinstance(value, list):
                lines.append(f"{key}={','.join(map(str, value))}" if key != "notes" else "")
                if key == "notes":
                    lines.extend(f"note={n}" for n in value)
            else:
                lines.append(f"{key}={value}")
        return "\n".join(line for line in lines if line) + "\n"


class _Steps:
    def __init__(self, report):
        self.report = report

    def run(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except LinkageError:
            raise
        except Exception as exc:
            raise LinkageError(name, exc) from exc
        self.report.runtime_ms_per_step[name] = (
            self.report.runtime_ms_per_step.get(name, 0.0) + 1000 * (time.perf_counter() - start))
        self.report.max_rss_kb_per_step[name] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
        return out


@dataclass
class LinkageOutcome:
    matches: list[MatchResult]
    report: RunReport
    keys: CandidateIndex
    c: np.ndarray
    x: np.ndarray
    parties: list[Party]

    @property
    def dice(self) -> np.ndarray:
        return np.atleast_1d(bloom.dice_from_counts(len(self.parties), self.c, self.x))

    def match_rids(self) -> set[tuple[str, ...]]:
        return {m.rids for m in self.matches}


def _run_id(seed) -> bytes:
    return hashlib.sha256(f"mpprl-run-{seed}".encode()).digest()[:16]


def run_linkage(databases, config: ProtocolConfig, bus: MessageBus | None = None) -> LinkageOutcome:
    """Run the whole protocol over ``databases`` (one record list per party)."""
    n = len(databases)
    if n < 3:
        raise ValueError("the protocol needs at least three parties")
    if n != config.parties:
        raise ValueError(f"{n} databases given, parameters agreed for {config.parties} parties")
    bus = bus or MessageBus(roundtrip=config.roundtrip)
    run_id = _run_id(config.seed)
    rngs = [np.random.default_rng([config.seed, i]) for i in range(n)]
    report = RunReport("mpam-f" if config.filtering else "mpam", n, [len(db) for db in databases])
    steps = _Steps(report)

    parties = steps.run("prepare", lambda: [prepare_party(db, config, i, rngs[i])
                                            for i, db in enumerate(databases)])
    grams = [len(bloom.record_qgrams(r.values(config.qid_attrs), config.params.q))
             for db in databases for r in db]
    report.mean_grams = float(np.mean(grams))
    report.configured_k = config.params.k
    report.implied_optimal_k = bloom.optimal_k(config.params.l, report.mean_grams)

    inboxes = steps.run("exchange", exchange_segments, parties, bus, run_id)
    common = steps.run("blocking", lambda: common_blocks(
        [{bkv for bkv in inboxes[0][j].bkvs} for j in range(n)]))

    s_m = config.s_m if config.filtering else None

    def count(i):
        return compute_partial_counts(parties[i], inboxes[i], common, s_m)

    def count_all():
        if config.threads:
            with ThreadPoolExecutor(max_workers=n) as pool:
                return list(pool.map(count, range(n)))
        return [count(i) for i in range(n)]

    counts = steps.run("partial_counts", count_all)
    report.candidates_total = counts[0].index.total
    report.compared_per_party = [pc.compared for pc in counts]
    report.conjunctions_per_party = [pc.conjunctions for pc in counts]

    if config.filtering:
        keys = steps.run("reconcile", reconcile_survivors, counts, bus, run_id)
    else:
        keys = counts[0].index
        for pc in counts[1:]:
            if pc.index != keys:
                raise LinkageError("partial_counts", ProtocolError("parties enumerated different candidates"))
    report.candidates_after_filter = len(keys)

    c = np.zeros(len(keys), dtype=np.int64)
    x = np.zeros(len(keys), dtype=np.int64)
    shards = n if config.rotate_initiator else 1

    def secure_sum():
        out = []
        for s in range(shards):
            shard_keys = keys.shard(s, shards) if shards > 1 else keys
            sc, sx = run_secure_sum(counts, shard_keys, bus, run_id, rngs, initiator=s)
            c[s::shards] = sc
            x[s::shards] = sx
            out.append(s)
        return out

    steps.run("secure_sum", secure_sum)

    def classify_and_broadcast():
        results = []
        for s in range(shards):
            positions = np.arange(s, len(keys), shards)
            dice = np.atleast_1d(bloom.dice_from_counts(n, c[positions], x[positions]))
            hit = dice >= config.s_t
            for j in range(n):
                if j != s:
                    bus.send(MatchBroadcast(run_id, s, j, positions[hit], dice[hit]))
            for j in range(n):
                if j != s:
                    bus.receive(j, MatchBroadcast)
            for pos, d in zip(positions[hit], dice[hit]):
                key = keys[int(pos)]
                rids = tuple(parties[j].resolve(key[1][j]) for j in range(n))
                results.append((int(pos), MatchResult(key, float(d), True, rids)))
        results.sort(key=lambda t: t[0])
        return [m for _, m in results]

    matches = steps.run("classify", classify_and_broadcast)
    report.matches = len(matches)
    report.messages = dict(bus.messages, total=bus.total_messages)
    report.bytes = dict(bus.bytes, total=bus.total_bytes)
    report.segment_payload_bytes = bus.segment_payload_bytes
    report.notes.extend([
        f"offsets uniform in [0, 2^{int(math.log2(securesum.OFFSET_BOUND))}) per candidate",
        "blocking key values travel as plain Soundex codes alongside pseudonyms",
    ])
    if config.filtering:
        report.notes.append("survivor masks reveal each party's pruning decisions to the next party in the ring")
    if bus.pending():
        raise LinkageError("classify", ProtocolError(f"{bus.pending()} undelivered messages"))
    return LinkageOutcome(matches, report, keys, c, x, parties)
