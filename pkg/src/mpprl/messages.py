"""Inter-party message types, their binary wire format, and a counting bus.

Every message is ``tag (1 byte) | run id (16 bytes) | body``. Integers are
little-endian. Bit arrays are packed little-endian with bit 0 holding the
lowest Bloom filter index.

Bodies:

* ``SegmentBatch`` (tag 1): sender u8, recipient u8, segment index u8,
  segment bit length u32, count u32, then per share: pseudonym (16 bytes),
  BKV (u16 length + UTF-8), segment bits (ceil(bits/8) bytes).
* ``MaskedVectorMsg`` (tag 2): sender u8, recipient u8, hops u8, count u32,
  key digest (32 bytes), then count int64 masked c values and count int64
  masked x values.
* ``SurvivorMask`` (tag 3): sender u8, recipient u8, count u32, key digest
  (32 bytes), packed survivor bits.
* ``MatchBroadcast`` (tag 4): sender u8, recipient u8, count u32, then per
  match: candidate position u32, Dice similarity float64.
"""

from __future__ import annotations

import struct
from collections import Counter, defaultdict, deque
from dataclasses import dataclass

import numpy as np

TAG_SEGMENTS = 1
TAG_MASKED = 2
TAG_SURVIVORS = 3
TAG_MATCHES = 4


@dataclass(frozen=True)
class SegmentBatch:
    run_id: bytes
    sender: int
    recipient: int
    index: int
    nbits: int
    pseudonyms: tuple[bytes, ...]
    bkvs: tuple[str, ...]
    bits: np.ndarray  # N x nbits boolean


@dataclass(frozen=True)
class MaskedVectorMsg:
    run_id: bytes
    sender: int
    recipient: int
    hops: int
    digest: bytes
    masked_c: np.ndarray
    masked_x: np.ndarray


@dataclass(frozen=True)
class SurvivorMask:
    run_id: bytes
    sender: int
    recipient: int
    digest: bytes
    mask: np.ndarray


@dataclass(frozen=True)
class MatchBroadcast:
    run_id: bytes
    sender: int
    recipient: int
    positions: np.ndarray
    dice: np.ndarray


MESSAGE_TYPES = (SegmentBatch, MaskedVectorMsg, SurvivorMask, MatchBroadcast)


def _header(tag, run_id):
    if len(run_id) != 16:
        raise ValueError("run id must be 16 bytes")
    return bytes([tag]) + run_id


def encode(msg) -> bytes:
    if isinstance(msg, SegmentBatch):
        nbytes = -(-msg.nbits // 8)
        out = [_header(TAG_SEGMENTS, msg.run_id),
               struct.pack("<BBBII", msg.sender, msg.recipient, msg.index, msg.nbits,
                           len(msg.pseudonyms))]
        packed = np.packbits(msg.bits.reshape(len(msg.pseudonyms), msg.nbits).astype(bool),
                             axis=1, bitorder="little")
        assert packed.shape[1] == nbytes or len(msg.pseudonyms) == 0
        for pseudo, bkv, row in zip(msg.pseudonyms, msg.bkvs, packed):
            raw = bkv.encode("utf-8")
            out.append(pseudo + struct.pack("<H", len(raw)) + raw + row.tobytes())
        return b"".join(out)
    if isinstance(msg, MaskedVectorMsg):
        n = len(msg.masked_c)
        return b"".join([
            _header(TAG_MASKED, msg.run_id),
            struct.pack("<BBBI", msg.sender, msg.recipient, msg.hops, n),
            msg.digest,
            np.asarray(msg.masked_c, dtype="<i8").tobytes(),
            np.asarray(msg.masked_x, dtype="<i8").tobytes(),
        ])
    if isinstance(msg, SurvivorMask):
        return b"".join([
            _header(TAG_SURVIVORS, msg.run_id),
            struct.pack("<BBI", msg.sender, msg.recipient, len(msg.mask)),
            msg.digest,
            np.packbits(np.asarray(msg.mask, dtype=bool), bitorder="little").tobytes(),
        ])
    if isinstance(msg, MatchBroadcast):
        n = len(msg.positions)
        rec = np.empty(n, dtype=[("pos", "<u4"), ("dice", "<f8")])
        rec["pos"] = msg.positions
        rec["dice"] = msg.dice
        return b"".join([
            _header(TAG_MATCHES, msg.run_id),
            struct.pack("<BBI", msg.sender, msg.recipient, n),
            rec.tobytes(),
        ])
    raise TypeError(f"{type(msg).__name__} is not an inter-party message")


def decode(data: bytes):
    tag, run_id, body = data[0], data[1:17], memoryview(data)[17:]
    if tag == TAG_SEGMENTS:
        sender, recipient, index, nbits, n = struct.unpack_from("<BBBII", body)
        off = struct.calcsize("<BBBII")
        nbytes = -(-nbits // 8)
        pseudos, bkvs, rows = [], [], []
        for _ in range(n):
            pseudos.append(bytes(body[off:off + 16]))
            (blen,) = struct.unpack_from("<H", body, off + 16)
            off += 18
            bkvs.append(bytes(body[off:off + blen]).decode("utf-8"))
            off += blen
            rows.append(np.frombuffer(body[off:off + nbytes], dtype=np.uint8))
            off += nbytes
        if rows:
            bits = np.unpackbits(np.stack(rows), axis=1, count=nbits, bitorder="little").astype(bool)
        else:
            bits = np.zeros((0, nbits), dtype=bool)
        return SegmentBatch(run_id, sender, recipient, index, nbits, tuple(pseudos), tuple(bkvs), bits)
    if tag == TAG_MASKED:
        sender, recipient, hops, n = struct.unpack_from("<BBBI", body)
        off = struct.calcsize("<BBBI")
        digest = bytes(body[off:off + 32])
        off += 32
        c = np.frombuffer(body[off:off + 8 * n], dtype="<i8").astype(np.int64)
        x = np.frombuffer(body[off + 8 * n:off + 16 * n], dtype="<i8").astype(np.int64)
        return MaskedVectorMsg(run_id, sender, recipient, hops, digest, c, x)
    if tag == TAG_SURVIVORS:
        sender, recipient, n = struct.unpack_from("<BBI", body)
        off = struct.calcsize("<BBI")
        digest = bytes(body[off:off + 32])
        mask = np.unpackbits(np.frombuffer(body[off + 32:], dtype=np.uint8), count=n,
                             bitorder="little").astype(bool)
        return SurvivorMask(run_id, sender, recipient, digest, mask)
    if tag == TAG_MATCHES:
        sender, recipient, n = struct.unpack_from("<BBI", body)
        off = struct.calcsize("<BBI")
        rec = np.frombuffer(body[off:], dtype=[("pos", "<u4"), ("dice", "<f8")], count=n)
        return MatchBroadcast(run_id, sender, recipient, rec["pos"].astype(np.int64),
                              rec["dice"].astype(np.float64))
    raise ValueError(f"unknown message tag {tag}")


class MessageBus:
    """In-process transport that counts messages and serialized bytes.

    Only the types in :data:`MESSAGE_TYPES` can be sent. With
    ``roundtrip=True`` every message is encoded and the decoded copy is
    what the recipient receives.
    """

    def __init__(self, roundtrip: bool = False):
        self.roundtrip = roundtrip
        self.messages = Counter()
        self.bytes = Counter()
        self.segment_payload_bytes = 0
        self._queues = defaultdict(deque)

    def send(self, msg):
        if not isinstance(msg, MESSAGE_TYPES):
            raise TypeError(f"refusing to transmit {type(msg).__name__}")
        if msg.sender == msg.recipient:
            raise ValueError("a party does not message itself")
        data = encode(msg)
        name = type(msg).__name__
        self.messages[name] += 1
        self.bytes[name] += len(data)
        if isinstance(msg, SegmentBatch):
            self.segment_payload_bytes += len(msg.pseudonyms) * -(-msg.nbits // 8)
        self._queues[(msg.recipient, type(msg))].append(decode(data) if self.roundtrip else msg)

    def receive(self, recipient: int, kind):
        queue = self._queues[(recipient, kind)]
        if not queue:
            raise LookupError(f"party {recipient} has no pending {kind.__name__}")
        return queue.popleft()

    def pending(self) -> int:
        return sum(len(q) for q in self._queues.values())

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes.values())
