"""Posting block codec: delta-gap doc ids and variable-byte integers.

Payload layout (little-endian)::

    u32 body_length | u32 crc32(body) | body

``body`` is a single variable-byte stream holding, in order, the first doc id,
the remaining doc-id gaps, the BM25 codes and the learned codes. Each integer
is stored low 7 bits first; the final byte of an integer has its high bit set.
"""

import struct
import zlib
from typing import NamedTuple

import numpy as np

from .exceptions import CodecError

_HEADER = struct.Struct("<II")
_MAX_VARINT_BYTES = 5  # enough for u32


class PostingRecord(NamedTuple):
    doc_id: int
    w_bm25: int
    w_learned: int


def varint_encode(values):
    """Encode non-negative integers (< 2**32) into a variable-byte string."""
    v = np.asarray(values, dtype=np.int64).ravel()
    if v.size == 0:
        return b""
    if v.min() < 0 or v.max() >= 1 << 32:
        raise CodecError("varint values must lie in [0, 2**32)")
    v = v.astype(np.uint64)
    nbytes = np.ones(v.size, dtype=np.int64)
    for j in range(1, _MAX_VARINT_BYTES):
        nbytes += v >= np.uint64(1 << (7 * j))
    ends = np.cumsum(nbytes)
    starts = ends - nbytes
    out = np.zeros(int(ends[-1]), dtype=np.uint8)
    for j in range(int(nbytes.max())):
        sel = nbytes > j
        out[starts[sel] + j] = (v[sel] >> np.uint64(7 * j)) & np.uint64(0x7F)
    out[ends - 1] |= 0x80
    return out.tobytes()


def varint_decode(data):
    """Inverse of :func:`varint_encode`; returns an int64 array."""
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size == 0:
        return np.zeros(0, dtype=np.int64)
    ends = np.flatnonzero(buf & 0x80)
    if ends.size == 0 or ends[-1] != buf.size - 1:
        raise CodecError("varint stream ends mid-integer")
    starts = np.empty_like(ends)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    lengths = ends - starts + 1
    if lengths.max() > _MAX_VARINT_BYTES:
        raise CodecError("varint longer than 5 bytes")
    offsets = np.arange(buf.size) - np.repeat(starts, lengths)
    parts = (buf & 0x7F).astype(np.int64) << (7 * offsets)
    return np.add.reduceat(parts, starts)


def encode_arrays(doc_ids, w_bm25, w_learned):
    """Encode one block given as three parallel integer arrays."""
    docs = np.asarray(doc_ids, dtype=np.int64)
    if docs.size and np.any(np.diff(docs) <= 0):
        raise CodecError("doc ids must be strictly increasing within a block")
    if docs.size:
        gaps = np.diff(docs, prepend=0)
        gaps[0] = docs[0]
    else:
        gaps = docs
    body = varint_encode(
        np.concatenate([gaps, np.asarray(w_bm25, np.int64), np.asarray(w_learned, np.int64)])
    )
    return _HEADER.pack(len(body), zlib.crc32(body)) + body


def decode_arrays(payload):
    """Decode a payload into (doc_ids, w_bm25, w_learned) int64 arrays."""
    if len(payload) < _HEADER.size:
        raise CodecError("payload shorter than its header")
    length, crc = _HEADER.unpack_from(payload)
    body = payload[_HEADER.size:]
    if len(body) != length:
        raise CodecError(f"payload length {len(body)} != declared {length}")
    if zlib.crc32(body) != crc:
        raise CodecError("payload checksum mismatch")
    values = varint_decode(body)
    if values.size % 3:
        raise CodecError("payload does not hold whole records")
    n = values.size // 3
    docs = np.cumsum(values[:n])
    return docs, values[n:2 * n], values[2 * n:]


def encode_block(records):
    """Encode a sequence of :class:`PostingRecord` (or 3-tuples)."""
    if not records:
        return encode_arrays([], [], [])
    docs, wb, wl = zip(*records)
    return encode_arrays(docs, wb, wl)


def decode_block(payload):
    docs, wb, wl = decode_arrays(payload)
    return [PostingRecord(*r) for r in zip(docs.tolist(), wb.tolist(), wl.tolist())]
