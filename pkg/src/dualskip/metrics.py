"""Relevance and efficiency measurements.

Runs are ``{qid: [(doc_id, score), ...]}`` in rank order; qrels are
``{qid: {doc_id: grade}}``. Per-query metrics are averaged over the run's
queries. A run query without any qrels contributes zero and triggers a
:class:`MissingQrelsWarning`.
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import check_positive_int
from .exceptions import DataError, ParseError, QueryMismatchError, UndefinedSkewnessError


class MissingQrelsWarning(UserWarning):
    pass


@dataclass
class LatencySummary:
    mean: float
    p95: float
    count: int


def missing_queries(run, qrels):
    """Run query ids with no relevance labels, sorted."""
    return sorted(q for q in run if q not in qrels)


def _warn_missing(run, qrels):
    missing = missing_queries(run, qrels)
    if missing:
        warnings.warn(
            f"{len(missing)} run queries have no qrels and score 0: {', '.join(missing[:10])}",
            MissingQrelsWarning,
            stacklevel=3,
        )


def mrr_at(run, qrels, cutoff=10):
    cutoff = check_positive_int(cutoff, "cutoff")
    if not run:
        return 0.0
    _warn_missing(run, qrels)
    total = 0.0
    for qid, ranked in run.items():
        labels = qrels.get(qid, {})
        for rank, (doc, _) in enumerate(ranked[:cutoff], 1):
            if labels.get(doc, 0) >= 1:
                total += 1.0 / rank
                break
    return total / len(run)


def dcg(grades):
    return sum((2.0 ** g - 1.0) / math.log2(i + 1) for i, g in enumerate(grades, 1))


def ndcg_at(run, qrels, cutoff=10):
    """Mean NDCG with gain 2^grade - 1 and a log2(rank + 1) discount."""
    cutoff = check_positive_int(cutoff, "cutoff")
    if not run:
        return 0.0
    _warn_missing(run, qrels)
    total = 0.0
    for qid, ranked in run.items():
        labels = qrels.get(qid, {})
        ideal = dcg(sorted(labels.values(), reverse=True)[:cutoff])
        if ideal > 0:
            total += dcg([labels.get(doc, 0) for doc, _ in ranked[:cutoff]]) / ideal
    return total / len(run)


def recall_at(run, qrels, k):
    """Mean fraction of relevant docs retrieved in the top k.

    Only run queries with at least one relevant label enter the mean.
    """
    k = check_positive_int(k, "k")
    values = []
    for qid, ranked in run.items():
        relevant = {d for d, g in qrels.get(qid, {}).items() if g >= 1}
        if relevant:
            hits = sum(1 for doc, _ in ranked[:k] if doc in relevant)
            values.append(hits / len(relevant))
    return sum(values) / len(values) if values else 0.0


def overlap_ratio(run_a, run_b, k):
    """Mean share of top-k documents two runs have in common.

    The per-query denominator is k, or the longer of the two lists when both
    are shorter than k, so a run always overlaps itself fully. The mean is
    computed in exact rationals so threshold comparisons are not skewed by
    float accumulation.
    """
    k = check_positive_int(k, "k")
    if run_a.keys() != run_b.keys():
        raise QueryMismatchError(run_a.keys() ^ run_b.keys())
    if not run_a:
        return 1.0
    total = Fraction(0)
    for qid, ranked in run_a.items():
        top_a = {doc for doc, _ in ranked[:k]}
        top_b = {doc for doc, _ in run_b[qid][:k]}
        denom = max(len(top_a), len(top_b))
        total += Fraction(len(top_a & top_b), denom) if denom else 1
    return float(total / len(run_a))


def skewness(sample):
    """Fisher-Pearson coefficient g1 = m3 / m2**1.5 (biased moments)."""
    x = np.asarray(sample, dtype=np.float64)
    if x.size < 3:
        raise UndefinedSkewnessError(f"skewness needs at least 3 values, got {x.size}")
    d = x - x.mean()
    m2 = np.mean(d * d)
    if not m2 > 0:
        raise UndefinedSkewnessError("skewness is undefined for a constant sample")
    return float(np.mean(d * d * d) / m2 ** 1.5)


def latency_summary(times):
    """Mean and nearest-rank 95th percentile of per-query times."""
    t = sorted(times)
    if not t:
        raise DataError("latency summary needs at least one timing")
    p95 = t[math.ceil(0.95 * len(t)) - 1]
    return LatencySummary(mean=sum(t) / len(t), p95=p95, count=len(t))


# -- TREC formats ---------------------------------------------------------------


def read_qrels(path):
    """Parse ``qid 0 docid grade`` lines."""
    qrels = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 'qid 0 docid grade'")
            qid, _, doc, grade = parts
            try:
                grade = int(grade)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: grade must be an integer") from None
            if grade < 0:
                raise ParseError(f"{path}:{lineno}: grade must be >= 0")
            labels = qrels.setdefault(qid, {})
            if doc in labels:
                raise ParseError(f"{path}:{lineno}: duplicate judgment for {qid} {doc}")
            labels[doc] = grade
    return qrels


def write_qrels(qrels, path):
    with open(path, "w", encoding="utf-8") as f:
        for qid, labels in qrels.items():
            for doc, grade in labels.items():
                f.write(f"{qid} 0 {doc} {grade}\n")


def read_run(path):
    """Parse ``qid Q0 docid rank score tag`` lines into rank order."""
    rows = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ParseError(f"{path}:{lineno}: expected 'qid Q0 docid rank score tag'")
            qid, _, doc, rank, score, _ = parts
            try:
                rows.setdefault(qid, []).append((int(rank), doc, float(score)))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad rank or score") from None
    run = {}
    for qid, entries in rows.items():
        entries.sort()
        run[qid] = [(doc, score) for _, doc, score in entries]
    return run


def format_run(run, tag):
    lines = []
    for qid, ranked in run.items():
        for rank, (doc, score) in enumerate(ranked, 1):
            lines.append(f"{qid} Q0 {doc} {rank} {score:.6f} {tag}\n")
    return "".join(lines)


def write_run(run, path, tag):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_run(run, tag))
