"""Linkage quality, filtering efficiency, bit sensitivity and disclosure risk."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import bloom
from .bloom import BloomParams


@dataclass(frozen=True)
class Quality:
    precision: float
    recall: float
    f1: float


def quality(predicted: Iterable[tuple], truth: Iterable[tuple]) -> Quality:
    """Precision, recall and F-measure over record-set tuples.

    Undefined ratios (no predictions, or no true matches) are reported as 0.
    """
    pred, true = set(predicted), set(truth)
    tp = len(pred & true)
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(true) if true else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Quality(precision, recall, f1)


def reduction_ratio(after: int, total: int) -> float:
    """``1 - after / total``; blocking RR or filtering RR_f alike."""
    if total <= 0:
        raise ValueError("the reference count must be positive")
    if not 0 <= after <= total:
        raise ValueError(f"count after reduction ({after}) must lie in [0, {total}]")
    return 1.0 - after / total


def reduction_ratio_filter(before: int, after: int) -> float:
    return reduction_ratio(after, before)


@dataclass
class SensitivityProfile:
    """Per-bit sensitivity for positions set in at least one record."""

    positions: np.ndarray
    dist: np.ndarray
    freq: np.ndarray

    @property
    def sensitivity(self) -> np.ndarray:
        return 1.0 / np.minimum(self.dist, self.freq)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bit", "dist", "freq", "sensitivity"])
            for row in zip(self.positions, self.dist, self.freq, self.sensitivity):
                w.writerow([int(row[0]), int(row[1]), int(row[2]), f"{row[3]:.6f}"])


def sensitivity_profile(records: Sequence[Sequence[str]], params: BloomParams) -> SensitivityProfile:
    """Simulation attack a party can mount on its own encoded records.

    ``dist`` counts unique q-grams hashed to a bit, ``freq`` the records
    that set it, and sensitivity is ``1 / min(dist, freq)``.
    """
    universe = set()
    for values in records:
        universe |= bloom.record_qgrams(values, params.q)
    dist = np.zeros(params.l, dtype=np.int64)
    for gram in universe:
        dist[sorted(set(bloom.gram_positions(gram, params)))] += 1
    freq = bloom.encode_many(records, params).sum(axis=0, dtype=np.int64)
    pos = np.flatnonzero(freq > 0)
    return SensitivityProfile(pos, dist[pos], freq[pos])


@dataclass(frozen=True)
class DisclosureRisk:
    dr_mean: float
    dr_marketer: float
    n_g: np.ndarray  # number of global matches per observed pattern


def _pattern_keys(bits: np.ndarray) -> list[bytes]:
    packed = np.packbits(np.atleast_2d(bits), axis=1)
    return [row.tobytes() for row in packed]


def disclosure_risk(observed: np.ndarray, global_patterns: np.ndarray) -> DisclosureRisk:
    """Frequency attack matching each observed bit pattern exactly.

    ``p_s = 1 / n_g`` where ``n_g`` counts global patterns equal to the
    observed one; patterns with no global counterpart contribute 0.
    """
    if len(global_patterns) == 0:
        raise ValueError("the global database is empty")
    counts = Counter(_pattern_keys(global_patterns))
    n_g = np.array([counts.get(k, 0) for k in _pattern_keys(observed)], dtype=np.int64)
    p_s = np.zeros(len(n_g))
    np.divide(1.0, n_g, out=p_s, where=n_g > 0)
    return DisclosureRisk(float(p_s.mean()) if len(p_s) else 0.0,
                          float(np.mean(n_g == 1)) if len(n_g) else 0.0, n_g)


def frequency_attack(observed_segments: np.ndarray, global_records: Sequence[Sequence[str]],
                     params: BloomParams, position: int) -> DisclosureRisk:
    """Attack by the party at ``position`` (1-based) on the segments it received.

    The adversary encodes the global records with the agreed parameters
    and compares segment ``position`` of each to the observed patterns.
    """
    if not global_records:
        raise ValueError("the global database is empty")
    global_bits = bloom.encode_many(global_records, params)
    return disclosure_risk(observed_segments, bloom.segment_matrix(global_bits, params, position))


def attack_all_positions(databases: Sequence[Sequence[Sequence[str]]], params: BloomParams) -> list[DisclosureRisk]:
    """Worst case where the global database equals the linked databases.

    For each adversary position ``i`` the observed patterns are segment
    ``i`` of every record held by the other parties.
    """
    encoded = [bloom.encode_many(db, params) for db in databases]
    global_bits = np.concatenate(encoded)
    out = []
    for i in range(params.parties):
        observed = np.concatenate([bloom.segment_matrix(e, params, i + 1)
                                   for j, e in enumerate(encoded) if j != i])
        out.append(disclosure_risk(observed, bloom.segment_matrix(global_bits, params, i + 1)))
    return out


def mean_risk(risks: Sequence[DisclosureRisk]) -> tuple[float, float]:
    return (float(np.mean([r.dr_mean for r in risks])),
            float(np.mean([r.dr_marketer for r in risks])))
