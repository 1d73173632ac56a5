"""Dual-weight block-max inverted index: build, partition, persist, load.

Every posting record carries two quantized weights (BM25 and learned). Lists
are cut into blocks; each block keeps its last doc id and the maximum of each
weight channel so traversal can bound scores without decoding the payload.
"""

import io
import json
import math
import numbers
import struct
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_choice, check_positive_int
from .codec import PostingRecord, decode_arrays, encode_arrays
from .exceptions import (
    BuildError,
    ConfigError,
    IndexChecksumError,
    IndexLoadError,
    IndexTruncatedError,
    IndexVersionError,
)
from .scoring import DEFAULT_B, DEFAULT_K1, QMAX, CorpusStats, bm25_weight, quantize_weight

MAGIC = b"DSKI"
FORMAT_VERSION = 1
PARTITIONS = ("fixed", "variable")


@dataclass
class PostingBlock:
    max_doc_id: int
    max_bm25: int
    max_learned: int
    record_count: int
    payload: bytes

    def records(self):
        docs, wb, wl = decode_arrays(self.payload)
        return [PostingRecord(*r) for r in zip(docs.tolist(), wb.tolist(), wl.tolist())]


@dataclass
class PostingList:
    term_id: int
    blocks: list
    list_max_bm25: int
    list_max_learned: int
    doc_count: int

    def records(self):
        out = []
        for block in self.blocks:
            out.extend(block.records())
        return out


@dataclass
class InvertedIndex:
    vocabulary: dict
    postings: list
    stats: CorpusStats
    scale: float
    doc_names: list = field(default_factory=list)
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    format_version: int = FORMAT_VERSION

    @property
    def num_terms(self):
        return len(self.vocabulary)

    @property
    def num_postings(self):
        return sum(pl.doc_count for pl in self.postings)

    @property
    def num_blocks(self):
        return sum(len(pl.blocks) for pl in self.postings)

    def posting_list(self, term):
        """Posting list for ``term`` or None when the term is unknown."""
        tid = self.vocabulary.get(term)
        return None if tid is None else self.postings[tid]

    def terms(self):
        """Terms ordered by term id."""
        out = [None] * len(self.vocabulary)
        for term, tid in self.vocabulary.items():
            out[tid] = term
        return out


@dataclass
class BuildConfig:
    block_size: int = 128
    partition: str = "fixed"
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    scale: float = None
    slack: float = None

    def __post_init__(self):
        self.block_size = check_positive_int(self.block_size, "block_size")
        self.partition = check_choice(self.partition, "partition", PARTITIONS)
        if not self.k1 > 0:
            raise ConfigError(f"k1 must be > 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ConfigError(f"b must lie in [0, 1], got {self.b}")
        if self.scale is not None and not self.scale > 0:
            raise ConfigError(f"scale must be > 0, got {self.scale}")
        if self.slack is not None and self.slack < 0:
            raise ConfigError(f"slack must be >= 0, got {self.slack}")


# -- corpus ingestion --------------------------------------------------------


def tokenize(text):
    return text.lower().split()


def read_corpus(path):
    """Yield ``(where, record)`` pairs from a newline-delimited JSON file."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                yield where, json.loads(line)
            except json.JSONDecodeError as exc:
                raise BuildError(f"{where}: malformed JSON ({exc.msg})") from None


def _is_count(v):
    return isinstance(v, numbers.Integral) and not isinstance(v, bool) and v >= 0


def _is_weight(v):
    return (
        isinstance(v, numbers.Real)
        and not isinstance(v, bool)
        and math.isfinite(v)
        and v >= 0
    )


def parse_record(obj, where):
    """Validate one corpus record; returns ``(doc_name, tf, impact)``."""
    if not isinstance(obj, dict):
        raise BuildError(f"{where}: record must be a JSON object")
    doc = obj.get("id")
    if not isinstance(doc, str) or not doc:
        raise BuildError(f"{where}: missing or non-string 'id'")
    if "tf" in obj:
        tf = obj["tf"]
        if not isinstance(tf, dict) or not all(_is_count(v) for v in tf.values()):
            raise BuildError(f"{where}: 'tf' must map terms to non-negative integers")
    elif "text" in obj:
        if not isinstance(obj["text"], str):
            raise BuildError(f"{where}: 'text' must be a string")
        tf = dict(Counter(tokenize(obj["text"])))
    else:
        tf = {}
    impact = obj.get("impact", {})
    if not isinstance(impact, dict) or not all(_is_weight(v) for v in impact.values()):
        raise BuildError(f"{where}: 'impact' must map terms to non-negative numbers")
    if not all(isinstance(t, str) for t in list(tf) + list(impact)):
        raise BuildError(f"{where}: terms must be strings")
    return doc, tf, impact


def _iter_corpus(corpus):
    if isinstance(corpus, (str, Path)):
        yield from read_corpus(corpus)
        return
    for i, obj in enumerate(corpus, 1):
        if isinstance(obj, str):
            if not obj.strip():
                continue
            try:
                obj = json.loads(obj)
            except json.JSONDecodeError as exc:
                raise BuildError(f"line {i}: malformed JSON ({exc.msg})") from None
            yield f"line {i}", obj
        else:
            yield f"record {i}", obj


# -- partitioning ------------------------------------------------------------


def _greedy_cuts(weights, slack, lo, hi):
    cuts = [0]
    start = 0
    mx = weights[0]
    total = weights[0]
    for i in range(1, len(weights)):
        size = i - start
        x = weights[i]
        nmx = mx if mx >= x else x
        ntotal = total + x
        if size >= hi or (size >= lo and nmx - ntotal / (size + 1) > slack):
            cuts.append(i)
            start = i
            mx = x
            total = x
        else:
            mx = nmx
            total = ntotal
    return cuts


def block_cuts(learned, strategy="fixed", target_size=128, slack=None):
    """Start offsets of each block for a posting run.

    ``learned`` is the run's learned-channel weights in doc order. The
    variable strategy closes a block once adding the next record would push
    (block max - block mean) above ``slack``, keeping sizes within
    [target/2, 2*target]. Without an explicit slack, one is searched so the
    mean block size lands within 20% of the target; if no slack achieves
    that, fixed-size blocks are used instead.
    """
    strategy = check_choice(strategy, "strategy", PARTITIONS)
    target_size = check_positive_int(target_size, "target_size")
    n = len(learned)
    if n == 0:
        return []
    if strategy == "fixed" or n <= target_size:
        return list(range(0, n, target_size))
    w = [float(x) for x in learned]
    lo = max(1, target_size // 2)
    hi = 2 * target_size
    if slack is not None:
        return _greedy_cuts(w, slack, lo, hi)

    def off_target(cuts):
        return abs(n / len(cuts) - target_size) / target_size

    left, right = 0.0, max(w) - min(w)
    best = None
    for _ in range(14):
        mid = (left + right) / 2
        cuts = _greedy_cuts(w, mid, lo, hi)
        if best is None or off_target(cuts) < off_target(best):
            best = cuts
        mean = n / len(cuts)
        if abs(mean - target_size) <= 0.05 * target_size:
            break
        if mean < target_size:
            left = mid
        else:
            right = mid
    if off_target(best) <= 0.2:
        return best
    return list(range(0, n, target_size))


def partition_blocks(records, strategy="fixed", target_size=128, slack=None):
    """Split a doc-sorted record run into blocks (lists of records)."""
    records = list(records)
    cuts = block_cuts([r[2] for r in records], strategy, target_size, slack)
    bounds = cuts + [len(records)]
    return [records[bounds[i]:bounds[i + 1]] for i in range(len(cuts))]


def make_block(doc_ids, w_bm25, w_learned):
    docs = np.asarray(doc_ids, dtype=np.int64)
    wb = np.asarray(w_bm25, dtype=np.int64)
    wl = np.asarray(w_learned, dtype=np.int64)
    return PostingBlock(
        max_doc_id=int(docs[-1]),
        max_bm25=int(wb.max()),
        max_learned=int(wl.max()),
        record_count=int(docs.size),
        payload=encode_arrays(docs, wb, wl),
    )


# -- build -------------------------------------------------------------------


def build_index(corpus, config=None):
    """Build an :class:`InvertedIndex` from a corpus.

    ``corpus`` is a path to a newline-delimited JSON file or an iterable of
    records (dicts or JSON strings) shaped
    ``{"id": str, "tf": {term: int}, "impact": {term: number}}``. A ``"text"``
    string may replace ``"tf"``; it is lowercased and whitespace-split.
    """
    config = config or BuildConfig()
    names = []
    seen = {}
    doc_terms = []
    for where, obj in _iter_corpus(corpus):
        name, tf, impact = parse_record(obj, where)
        if name in seen:
            raise BuildError(f"{where}: duplicate document id {name!r}")
        seen[name] = len(names)
        names.append(name)
        doc_terms.append((tf, impact))

    vocab_terms = sorted({t for tf, imp in doc_terms for t in tf} | {t for tf, imp in doc_terms for t in imp})
    vocabulary = {t: i for i, t in enumerate(vocab_terms)}
    num_docs = len(names)

    p_term, p_doc, p_tf, p_imp = [], [], [], []
    doc_len = [0] * num_docs
    for d, (tf, impact) in enumerate(doc_terms):
        doc_len[d] = sum(tf.values())
        for t in tf.keys() | impact.keys():
            p_term.append(vocabulary[t])
            p_doc.append(d)
            p_tf.append(tf.get(t, 0))
            p_imp.append(float(impact.get(t, 0.0)))
    p_term = np.asarray(p_term, dtype=np.int64)
    p_doc = np.asarray(p_doc, dtype=np.int64)
    p_tf = np.asarray(p_tf, dtype=np.int64)
    p_imp = np.asarray(p_imp, dtype=np.float64)
    dl = np.asarray(doc_len, dtype=np.int64)

    df = np.bincount(p_term[p_tf > 0], minlength=len(vocab_terms))
    avg = float(dl.mean()) if num_docs else 0.0
    stats = CorpusStats(
        num_docs=num_docs,
        avg_doc_len=avg,
        doc_len=doc_len,
        doc_freq={t: int(df[i]) for i, t in enumerate(vocab_terms)},
    )

    w_b = np.zeros(p_tf.size)
    has_tf = p_tf > 0
    if has_tf.any():
        w_b[has_tf] = bm25_weight(
            p_tf[has_tf], df[p_term[has_tf]], dl[p_doc[has_tf]], stats, config.k1, config.b
        )

    if config.scale is not None:
        scale = float(config.scale)
    else:
        top = max(w_b.max(initial=0.0), p_imp.max(initial=0.0))
        scale = QMAX / top if top > 0 else 1.0
    q_b = quantize_weight(w_b, scale)
    q_l = quantize_weight(p_imp, scale)

    # Weights too small to survive quantization in both channels score zero
    # everywhere; dropping them keeps every stored record non-empty.
    keep = (q_b > 0) | (q_l > 0)
    p_term, p_doc, q_b, q_l = p_term[keep], p_doc[keep], q_b[keep], q_l[keep]
    order = np.lexsort((p_doc, p_term))
    p_term, p_doc, q_b, q_l = p_term[order], p_doc[order], q_b[order], q_l[order]
    bounds = np.searchsorted(p_term, np.arange(len(vocab_terms) + 1))

    postings = []
    for tid in range(len(vocab_terms)):
        s, e = int(bounds[tid]), int(bounds[tid + 1])
        docs, wb, wl = p_doc[s:e], q_b[s:e], q_l[s:e]
        cuts = block_cuts(wl, config.partition, config.block_size, config.slack)
        edges = cuts + [e - s]
        blocks = [
            make_block(docs[edges[i]:edges[i + 1]], wb[edges[i]:edges[i + 1]], wl[edges[i]:edges[i + 1]])
            for i in range(len(cuts))
        ]
        postings.append(
            PostingList(
                term_id=tid,
                blocks=blocks,
                list_max_bm25=max((blk.max_bm25 for blk in blocks), default=0),
                list_max_learned=max((blk.max_learned for blk in blocks), default=0),
                doc_count=e - s,
            )
        )
    return InvertedIndex(
        vocabulary=vocabulary,
        postings=postings,
        stats=stats,
        scale=scale,
        doc_names=names,
        k1=float(config.k1),
        b=float(config.b),
    )


# -- persistence -------------------------------------------------------------

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_LIST = struct.Struct("<IIII")
_BLOCK = struct.Struct("<IIIII")


def _write_str(buf, s):
    raw = s.encode("utf-8")
    buf.write(_U32.pack(len(raw)))
    buf.write(raw)


def dumps_index(index):
    """Serialize an index to bytes (the exact content :func:`save_index` writes)."""
    body = io.BytesIO()
    st = index.stats
    body.write(struct.pack("<Idddd", st.num_docs, st.avg_doc_len, index.scale, index.k1, index.b))
    for name, length in zip(index.doc_names, st.doc_len):
        body.write(_U32.pack(length))
        _write_str(body, name)
    terms = index.terms()
    body.write(_U32.pack(len(terms)))
    for term in terms:
        _write_str(body, term)
        body.write(_U32.pack(st.doc_freq.get(term, 0)))
    for pl in index.postings:
        body.write(_LIST.pack(pl.doc_count, pl.list_max_bm25, pl.list_max_learned, len(pl.blocks)))
        for blk in pl.blocks:
            body.write(
                _BLOCK.pack(blk.max_doc_id, blk.max_bm25, blk.max_learned, blk.record_count, len(blk.payload))
            )
            body.write(blk.payload)
    payload = body.getvalue()
    head = MAGIC + _U32.pack(index.format_version) + _U64.pack(len(payload) + 4 + 4 + 8 + 4)
    return head + payload + _U32.pack(zlib.crc32(head + payload))


def save_index(index, path):
    Path(path).write_bytes(dumps_index(index))


class _Reader:
    def __init__(self, data, pos):
        self.data = data
        self.pos = pos

    def unpack(self, fmt):
        try:
            out = fmt.unpack_from(self.data, self.pos)
        except struct.error:
            raise IndexTruncatedError("index data ends unexpectedly") from None
        self.pos += fmt.size
        return out

    def take(self, n):
        if self.pos + n > len(self.data):
            raise IndexTruncatedError("index data ends unexpectedly")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def string(self):
        (n,) = self.unpack(_U32)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise IndexLoadError("invalid UTF-8 in index strings") from None


def loads_index(data):
    data = bytes(data)
    if len(data) < 4 and MAGIC.startswith(data):
        raise IndexTruncatedError(f"index truncated inside the magic bytes ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise IndexLoadError("not a dualskip index (bad magic bytes)")
    if len(data) < 20:
        raise IndexTruncatedError("index header is truncated")
    (version,) = _U32.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise IndexVersionError(f"index format version {version}, expected {FORMAT_VERSION}")
    (total,) = _U64.unpack_from(data, 8)
    if len(data) < total:
        raise IndexTruncatedError(f"index file has {len(data)} bytes, header declares {total}")
    if len(data) > total:
        raise IndexLoadError(f"index file has {len(data) - total} trailing bytes")
    (crc,) = _U32.unpack_from(data, total - 4)
    if zlib.crc32(data[:total - 4]) != crc:
        raise IndexChecksumError("index checksum mismatch")

    r = _Reader(data[:total - 4], 16)
    num_docs, avg, scale, k1, b = r.unpack(struct.Struct("<Idddd"))
    names, doc_len = [], []
    for _ in range(num_docs):
        (length,) = r.unpack(_U32)
        doc_len.append(length)
        names.append(r.string())
    (num_terms,) = r.unpack(_U32)
    terms, doc_freq = [], {}
    for _ in range(num_terms):
        term = r.string()
        (df,) = r.unpack(_U32)
        terms.append(term)
        doc_freq[term] = df
    postings = []
    for tid in range(num_terms):
        count, mb, ml, nblocks = r.unpack(_LIST)
        blocks = []
        for _ in range(nblocks):
            max_doc, bb, bl, rc, plen = r.unpack(_BLOCK)
            blocks.append(PostingBlock(max_doc, bb, bl, rc, r.take(plen)))
        postings.append(PostingList(tid, blocks, mb, ml, count))
    if r.pos != len(r.data):
        raise IndexLoadError("unexpected bytes after posting data")
    return InvertedIndex(
        vocabulary={t: i for i, t in enumerate(terms)},
        postings=postings,
        stats=CorpusStats(num_docs, avg, doc_len, doc_freq),
        scale=scale,
        doc_names=names,
        k1=k1,
        b=b,
        format_version=version,
    )


def load_index(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IndexLoadError(f"cannot read index {path}: {exc.strerror}") from None
    return loads_index(data)
