"""Term weights and the hybrid bound/score combinations.

Two weight channels travel through the whole engine: a BM25 channel computed
from corpus statistics and a learned channel copied from the input. A
document's per-channel scores (and per-channel upper bounds) are blended
with a single mixing weight: ``w * bm25 + (1 - w) * learned``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import check_unit_interval
from .exceptions import DataError, InvalidStatisticsError

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
QMAX = 0xFFFF


@dataclass
class CorpusStats:
    num_docs: int
    avg_doc_len: float
    doc_len: list = field(default_factory=list)
    doc_freq: dict = field(default_factory=dict)

    def validate(self):
        if self.num_docs < 1:
            raise InvalidStatisticsError("num_docs must be >= 1")
        if not self.avg_doc_len > 0:
            raise InvalidStatisticsError("avg_doc_len must be > 0")
        if any(df > self.num_docs for df in self.doc_freq.values()):
            raise InvalidStatisticsError("a document frequency exceeds num_docs")
        if any(dl < 0 for dl in self.doc_len):
            raise InvalidStatisticsError("negative document length")
        return self


class QueryTerm(NamedTuple):
    term: str
    query_weight: float = 1.0


class ScorePair(NamedTuple):
    """Per-channel values: accumulated scores or upper bounds."""

    bm25: float
    learned: float


@dataclass(frozen=True)
class MixParams:
    alpha: float = 0.9
    beta: float = 0.2

    def __post_init__(self):
        check_unit_interval(self.alpha, "alpha")
        check_unit_interval(self.beta, "beta")


def idf(df, num_docs):
    """ln(1 + (N - df + 0.5) / (df + 0.5)); never negative."""
    df = np.asarray(df, dtype=np.float64)
    return np.log1p((num_docs - df + 0.5) / (df + 0.5))


def bm25_weight(tf, df, dl, stats, k1=DEFAULT_K1, b=DEFAULT_B):
    """BM25 contribution of one term to one document.

    Works on scalars or equally-shaped numpy arrays (the index builder passes
    whole posting columns). Scalar input returns a Python float.
    """
    scalar = np.ndim(tf) == 0 and np.ndim(df) == 0 and np.ndim(dl) == 0
    tf = np.asarray(tf, dtype=np.float64)
    df = np.asarray(df, dtype=np.float64)
    dl = np.asarray(dl, dtype=np.float64)
    if np.any(df < 1):
        raise InvalidStatisticsError("document frequency must be >= 1")
    if np.any(dl < 1):
        raise InvalidStatisticsError("document length must be >= 1")
    if np.any(tf < 0):
        raise InvalidStatisticsError("term frequency must be >= 0")
    if not k1 > 0 or not 0 <= b <= 1:
        raise InvalidStatisticsError(f"invalid BM25 parameters k1={k1}, b={b}")
    if stats.num_docs < 1 or not stats.avg_doc_len > 0:
        raise InvalidStatisticsError("corpus statistics are empty")
    norm = k1 * (1.0 - b + b * dl / stats.avg_doc_len)
    w = idf(df, stats.num_docs) * tf * (k1 + 1.0) / (tf + norm)
    return float(w) if scalar else w


def _mix(bm25, learned, weight):
    # Clamped into [min, max] of the two inputs: the exact convex combination
    # lies there, so endpoints and equal inputs come out exact while the
    # result stays monotone in each channel.
    v = weight * bm25 + (1.0 - weight) * learned
    if bm25 <= learned:
        lo, hi = bm25, learned
    else:
        lo, hi = learned, bm25
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def mix_bound(bounds, alpha):
    """Skip-oriented bound: alpha * Bound_B + (1 - alpha) * Bound_L."""
    alpha = check_unit_interval(alpha, "alpha")
    return _mix(bounds[0], bounds[1], alpha)


def mix_score(scores, beta):
    """Final rank score: beta * RankScore_B + (1 - beta) * RankScore_L.

    beta weights the BM25 channel, so beta=0 ranks purely by learned weights.
    """
    beta = check_unit_interval(beta, "beta")
    return _mix(scores[0], scores[1], beta)


def quantize_weight(w, scale):
    """Map a non-negative weight to a 16-bit unsigned code (array-aware)."""
    if not scale > 0:
        raise DataError(f"quantization scale must be > 0, got {scale}")
    arr = np.asarray(w, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DataError("weights must be non-negative")
    q = np.clip(np.rint(arr * scale), 0, QMAX).astype(np.int64)
    return int(q) if q.ndim == 0 else q


def dequantize_weight(q, scale):
    if not scale > 0:
        raise DataError(f"quantization scale must be > 0, got {scale}")
    if np.ndim(q) == 0:
        return q / scale
    return np.asarray(q, dtype=np.float64) / scale
