"""Synthetic multi-party datasets with controlled overlap and corruption.

Values are drawn from bundled lexicons: the most common US Census 1990
given names and surnames, North Carolina town names as suburbs, and a
range of North Carolina style postcodes.
"""

from __future__ import annotations

import csv
import random
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

FIELDS = ("given_name", "surname", "suburb", "postcode")
OPS = ("insert", "delete", "substitute", "transpose")


@dataclass(frozen=True)
class Record:
    rid: str
    attrs: dict

    def values(self, attrs: Sequence[str]) -> list[str]:
        return [self.attrs[a] for a in attrs]


def _read_lexicon(name):
    text = resources.files("mpprl.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def default_lexicons() -> dict[str, tuple[str, ...]]:
    return {
        "given_name": _read_lexicon("given_names.txt"),
        "surname": _read_lexicon("surnames.txt"),
        "suburb": _read_lexicon("suburbs.txt"),
        "postcode": tuple(str(z) for z in range(27006, 28910, 3)),
    }


@dataclass
class GenSpec:
    parties: int = 3
    n_records: int = 1000
    overlap: float = 0.5
    corrupt_fraction: float = 0.0
    max_ops: int = 3
    seed: int = 42
    # "record": every overlap copy is corrupted independently with
    # probability corrupt_fraction; "entity": that fraction of overlap
    # entities is corrupted at a random proper subset of parties.
    corrupt_mode: str = "record"
    lexicons: dict = field(default_factory=default_lexicons)

    def validate(self):
        if self.parties < 2:
            raise ValueError("need at least two parties")
        if self.n_records < 1:
            raise ValueError("n_records must be >= 1")
        for name in ("overlap", "corrupt_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 1 <= self.max_ops <= 3:
            raise ValueError("max_ops must be in 1..3")
        if self.corrupt_mode not in ("record", "entity"):
            raise ValueError(f"unknown corrupt_mode {self.corrupt_mode!r}")
        for f in FIELDS:
            if not self.lexicons.get(f):
                raise ValueError(f"lexicon for {f!r} is empty")


@dataclass
class Dataset:
    databases: list[list[Record]]
    truth: set[tuple[str, ...]]
    entities: dict[str, tuple[str, ...]]  # entity id -> per-party rid


def _alphabet(value: str) -> str:
    return string.digits if value.isdigit() else string.ascii_lowercase


def _apply_op(value: str, op: str, rng: random.Random, alphabet: str) -> str:
    n = len(value)
    if op == "insert":
        i = rng.randint(0, n)
        return value[:i] + rng.choice(alphabet) + value[i:]
    if op == "delete":
        i = rng.randrange(n)
        return value[:i] + value[i + 1:]
    if op == "substitute":
        i = rng.randrange(n)
        ch = rng.choice([c for c in alphabet if c != value[i]])
        return value[:i] + ch + value[i + 1:]
    i = rng.randrange(n - 1)
    return value[:i] + value[i + 1] + value[i] + value[i + 2:]


def _draw_op(value: str, rng: random.Random) -> str:
    while True:
        op = rng.choice(OPS)
        if op in ("delete", "substitute") and not value:
            continue
        # swapping two equal characters would be a no-op
        if op == "transpose" and not any(a != b for a, b in zip(value, value[1:])):
            continue
        return op


def corrupt(value: str, n_ops: int, seed=None, alphabet: str | None = None) -> str:
    """Apply ``n_ops`` random character edits; the result always differs.

    ``seed`` may be an int or a :class:`random.Random`.
    """
    if not 1 <= n_ops <= 3:
        raise ValueError("n_ops must be in 1..3")
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    alphabet = alphabet or _alphabet(value)
    while True:
        out = value
        for _ in range(n_ops):
            op = _draw_op(out, rng)
            if op == "transpose":
                while True:
                    cand = _apply_op(out, op, rng, alphabet)
                    if cand != out:
                        break
                out = cand
            else:
                out = _apply_op(out, op, rng, alphabet)
        if out != value:
            return out


def corrupt_record(attrs: dict, n_ops: int, rng: random.Random) -> dict:
    """Apply ``n_ops`` edits, each to a uniformly chosen attribute."""
    out = dict(attrs)
    for _ in range(n_ops):
        name = rng.choice(FIELDS)
        out[name] = corrupt(out[name], 1, rng, alphabet=_alphabet(attrs[name]))
    if out == attrs:
        return corrupt_record(attrs, n_ops, rng)
    return out


def _unique_entities(count, lexicons, rng):
    capacity = 1
    for f in FIELDS:
        capacity *= len(set(lexicons[f]))
    if count > capacity // 4:
        raise ValueError(f"lexicons too small for {count} distinct entities (capacity {capacity})")
    seen = set()
    entities = []
    while len(entities) < count:
        ent = tuple(rng.choice(lexicons[f]) for f in FIELDS)
        if ent not in seen:
            seen.add(ent)
            entities.append(dict(zip(FIELDS, ent)))
    return entities


def _corrupted_parties(spec: GenSpec, rng: random.Random, n_overlap: int) -> list[set[int]]:
    p = spec.parties
    if spec.corrupt_mode == "entity":
        chosen = set(rng.sample(range(n_overlap), round(spec.corrupt_fraction * n_overlap)))
        out = []
        for e in range(n_overlap):
            if e not in chosen:
                out.append(set())
                continue
            size = rng.randint(1, p - 1)
            out.append(set(rng.sample(range(p), size)))
        return out
    out = []
    for _ in range(n_overlap):
        hit = {j for j in range(p) if rng.random() < spec.corrupt_fraction}
        if len(hit) == p:
            hit.discard(rng.randrange(p))
        out.append(hit)
    return out


def generate(spec: GenSpec) -> Dataset:
    spec.validate()
    rng = random.Random(spec.seed)
    p, n = spec.parties, spec.n_records
    n_overlap = round(spec.overlap * n)
    entities = _unique_entities(n_overlap + p * (n - n_overlap), spec.lexicons, rng)
    overlap, rest = entities[:n_overlap], entities[n_overlap:]
    corrupted = _corrupted_parties(spec, rng, n_overlap)

    rows = [[] for _ in range(p)]  # (entity id or None, attrs)
    for e, attrs in enumerate(overlap):
        for j in range(p):
            if j in corrupted[e]:
                rows[j].append((e, corrupt_record(attrs, rng.randint(1, spec.max_ops), rng)))
            else:
                rows[j].append((e, dict(attrs)))
    per_party = n - n_overlap
    for j in range(p):
        rows[j].extend((None, a) for a in rest[j * per_party:(j + 1) * per_party])

    databases = []
    entity_rids = [[None] * p for _ in range(n_overlap)]
    for j in range(p):
        rng.shuffle(rows[j])
        db = []
        for i, (e, attrs) in enumerate(rows[j]):
            rid = f"p{j + 1}-{i:07d}"
            db.append(Record(rid, attrs))
            if e is not None:
                entity_rids[e][j] = rid
        databases.append(db)
    ents = {f"e{e:07d}": tuple(r) for e, r in enumerate(entity_rids)}
    return Dataset(databases, set(ents.values()), ents)


def write_dataset(dataset: Dataset, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, db in enumerate(dataset.databases):
        path = out_dir / f"party_{j + 1}.csv"
        write_records(db, path)
        paths.append(path)
    with open(out_dir / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_id"] + [f"party_{j + 1}" for j in range(len(dataset.databases))])
        for eid in sorted(dataset.entities):
            w.writerow([eid, *dataset.entities[eid]])
    return paths


def write_records(records: Sequence[Record], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rid", *FIELDS])
        for rec in records:
            w.writerow([rec.rid, *(rec.attrs[f] for f in FIELDS)])


def read_records(path) -> list[Record]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [Record(row.pop("rid"), row) for row in reader]


def read_truth(path) -> set[tuple[str, ...]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return {tuple(row[1:]) for row in reader}
