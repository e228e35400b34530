"""Soundex phonetic blocking and block-key intersection across parties."""

from __future__ import annotations

from collections import defaultdict
from typing import Mapping, Sequence

EMPTY_CODE = "Z000"

_CODES = {}
for _letters, _digit in (("bfpv", "1"), ("cgjkqsxz", "2"), ("dt", "3"),
                         ("l", "4"), ("mn", "5"), ("r", "6")):
    for _ch in _letters:
        _CODES[_ch] = _digit


def soundex(value: str) -> str:
    """American Soundex code; ``Z000`` for input with no letters.

    H and W do not separate letters with equal codes, vowels (and Y) do.
    """
    letters = [ch for ch in value.lower() if "a" <= ch <= "z"]
    if not letters:
        return EMPTY_CODE
    first = letters[0]
    digits = []
    last = _CODES.get(first, "")
    for ch in letters[1:]:
        if ch in "hw":
            continue
        code = _CODES.get(ch, "")
        if code and code != last:
            digits.append(code)
            if len(digits) == 3:
                break
        last = code
    return (first.upper() + "".join(digits) + "000")[:4]


class BlockIndex(dict):
    """Blocking key value -> list of record identifiers (insertion ordered)."""

    def n_records(self) -> int:
        return sum(len(v) for v in self.values())


def blocking_key(values: Mapping[str, str], blocking_attrs: Sequence[str]) -> str:
    return "".join(soundex(values[a]) for a in blocking_attrs)


def build_blocks(records, blocking_attrs: Sequence[str]) -> BlockIndex:
    """Group records by the concatenated Soundex codes of ``blocking_attrs``.

    ``records`` are objects with ``rid`` and ``attrs`` (see
    :class:`mpprl.datagen.Record`).
    """
    if not blocking_attrs:
        raise ValueError("at least one blocking attribute is required")
    blocks = defaultdict(list)
    for rec in records:
        missing = [a for a in blocking_attrs if a not in rec.attrs]
        if missing:
            raise KeyError(f"unknown blocking attribute(s) {missing} for record {rec.rid}")
        blocks[blocking_key(rec.attrs, blocking_attrs)].append(rec.rid)
    return BlockIndex(blocks)


def common_blocks(indexes: Sequence[Mapping]) -> list[str]:
    if len(indexes) < 2:
        raise ValueError("need block indexes from at least two parties")
    keys = set(indexes[0])
    for index in indexes[1:]:
        keys &= set(index)
    return sorted(keys)
