"""Synthetic corpora with controllable weight skew, and batch experiments.

Documents are drawn from topics so queries (also topical) meet documents
matching several of their terms. Term frequencies follow a left-skewed Beta
shape, which makes the BM25 channel left-skewed per term; learned weights
follow a right-skewed Beta shape. Relevance labels are planted from a noisy
learned-score ranking.
"""

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._validation import check_positive_int, check_unit_interval
from .exceptions import ConfigError, ExperimentError, ParseError
from .metrics import latency_summary, mrr_at, ndcg_at, overlap_ratio, recall_at
from .retrieval import RetrievalConfig, parse_query, retrieve
from .scoring import QueryTerm


@dataclass
class SynthSpec:
    num_docs: int = 10000
    vocab_size: int = 2000
    doc_len_mean: float = 20.0
    query_count: int = 500
    query_len_mean: int = 3
    learned_skew_shape: tuple = (2.0, 8.0)
    tf_skew_shape: tuple = (8.0, 2.0)
    expansion_rate: float = 0.3
    num_topics: int = 40
    topic_size: int = 40
    topic_share: float = 0.5
    tf_levels: int = 5
    learned_scale: float = 10.0
    relevant_per_query: int = 3
    relevance_noise: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("num_docs", "vocab_size", "query_count", "query_len_mean", "num_topics",
                     "topic_size", "tf_levels", "relevant_per_query"):
            check_positive_int(getattr(self, name), name)
        if not self.doc_len_mean >= 1:
            raise ConfigError("doc_len_mean must be >= 1")
        if self.topic_size > self.vocab_size:
            raise ConfigError("topic_size cannot exceed vocab_size")
        check_unit_interval(self.expansion_rate, "expansion_rate")
        check_unit_interval(self.topic_share, "topic_share")
        for name in ("learned_skew_shape", "tf_skew_shape"):
            shape = tuple(getattr(self, name))
            if len(shape) != 2 or min(shape) <= 0:
                raise ConfigError(f"{name} must be two positive Beta parameters")
            setattr(self, name, shape)
        if not self.learned_scale > 0 or self.relevance_noise < 0:
            raise ConfigError("learned_scale must be > 0 and relevance_noise >= 0")


def term_name(i):
    return f"t{i:05d}"


def generate_corpus(spec):
    """Return ``(corpus_records, queries, qrels)``, deterministic in ``spec.seed``.

    ``queries`` maps qid -> list of :class:`QueryTerm`; ``qrels`` maps
    qid -> {doc name: grade}.
    """
    rng = np.random.default_rng(spec.seed)
    V = spec.vocab_size
    ranks = np.arange(1, V + 1)
    background = 1.0 / (ranks + 10.0)
    background /= background.sum()
    topics = [np.sort(rng.choice(V, size=spec.topic_size, replace=False)) for _ in range(spec.num_topics)]
    importance = rng.uniform(0.5, 1.5, size=V) * spec.learned_scale
    la, lb = spec.learned_skew_shape
    ta, tb = spec.tf_skew_shape

    records = []
    rows, cols, vals = [], [], []
    for d in range(spec.num_docs):
        topic = topics[rng.integers(spec.num_topics)]
        length = max(1, int(rng.poisson(spec.doc_len_mean)))
        n_topic = min(int(rng.binomial(length, spec.topic_share)), topic.size)
        own = rng.choice(topic, size=n_topic, replace=False)
        extra = rng.choice(V, size=length - n_topic, p=background)
        terms = np.unique(np.concatenate([own, extra]))
        tf = 1 + np.minimum(np.floor(rng.beta(ta, tb, size=terms.size) * spec.tf_levels), spec.tf_levels - 1)
        learned = importance[terms] * rng.beta(la, lb, size=terms.size)
        tf_map = {term_name(t): int(f) for t, f in zip(terms.tolist(), tf.tolist())}
        impact = {term_name(t): round(float(w), 4) for t, w in zip(terms.tolist(), learned.tolist())}
        if rng.random() < spec.expansion_rate:
            candidates = np.setdiff1d(topic, terms)
            n_exp = min(candidates.size, 1 + int(rng.poisson(1.0)))
            if n_exp:
                exp_terms = np.sort(rng.choice(candidates, size=n_exp, replace=False))
                exp_w = 0.5 * importance[exp_terms] * rng.beta(la, lb, size=n_exp)
                for t, w in zip(exp_terms.tolist(), exp_w.tolist()):
                    impact[term_name(t)] = round(float(w), 4)
        impact = dict(sorted(impact.items()))
        records.append({"id": f"D{d}", "tf": tf_map, "impact": impact})
        for name, w in impact.items():
            rows.append(d)
            cols.append(int(name[1:]))
            vals.append(w)

    weights = sparse.csr_matrix((vals, (rows, cols)), shape=(spec.num_docs, V))
    queries = {}
    qrels = {}
    lo = max(1, spec.query_len_mean - 1)
    for q in range(spec.query_count):
        qid = f"Q{q}"
        topic = topics[rng.integers(spec.num_topics)]
        length = min(int(rng.integers(lo, spec.query_len_mean + 2)), topic.size)
        terms = np.sort(rng.choice(topic, size=length, replace=False))
        queries[qid] = [QueryTerm(term_name(t), 1.0) for t in terms.tolist()]
        vec = np.zeros(V)
        vec[terms] = 1.0
        scores = weights @ vec
        hit = np.flatnonzero(scores > 0)
        labels = {}
        if hit.size:
            noisy = scores[hit] + spec.relevance_noise * scores[hit].std() * rng.standard_normal(hit.size)
            order = hit[np.lexsort((hit, -noisy))][:spec.relevant_per_query]
            for rank, d in enumerate(order.tolist()):
                labels[f"D{d}"] = 2 if rank == 0 else 1
        qrels[qid] = labels
    return records, queries, qrels


# -- file formats ----------------------------------------------------------------


def format_corpus(records):
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def write_corpus(records, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_corpus(records))


def format_queries(queries):
    lines = []
    for qid, terms in queries.items():
        parts = [t.term if t.query_weight == 1.0 else f"{t.term}:{t.query_weight:g}" for t in terms]
        lines.append(f"{qid}\t{' '.join(parts)}\n")
    return "".join(lines)


def write_queries(queries, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_queries(queries))


def read_queries(path):
    """Parse ``qid<TAB>term[:weight] ...`` lines into qid -> [QueryTerm]."""
    queries = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            qid, sep, text = line.partition("\t")
            if not sep or not qid.strip():
                raise ParseError(f"{path}:{lineno}: expected 'qid<TAB>terms'")
            if qid in queries:
                raise ParseError(f"{path}:{lineno}: duplicate query id {qid}")
            try:
                queries[qid] = parse_query(text)
            except ConfigError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return queries


# -- experiments ---------------------------------------------------------------


@dataclass
class ReportRow:
    label: str
    config: RetrievalConfig
    mrr: float
    ndcg: float
    recall: float
    overlap: float
    bload: float
    evals: int
    blocks_loaded: int
    blocks_total: int
    mrt_ms: float
    p95_ms: float
    traces: dict = field(default_factory=dict, repr=False)
    run: dict = field(default_factory=dict, repr=False)


@dataclass
class ExperimentReport:
    rows: list

    COLUMNS = ("label", "MRR@10", "NDCG@10", "Recall@k", "Overlap", "BLoad", "#Eval", "MRT(ms)", "95T(ms)")

    def _cells(self, row):
        return [
            row.label,
            f"{row.mrr:.4f}",
            f"{row.ndcg:.4f}",
            f"{row.recall:.4f}",
            f"{100 * row.overlap:.2f}%",
            f"{100 * row.bload:.2f}%",
            str(row.evals),
            f"{row.mrt_ms:.3f}",
            f"{row.p95_ms:.3f}",
        ]

    def to_text(self):
        table = [list(self.COLUMNS)] + [self._cells(r) for r in self.rows]
        widths = [max(len(line[i]) for line in table) for i in range(len(self.COLUMNS))]
        out = []
        for n, line in enumerate(table):
            cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
            out.append("  ".join(cells).rstrip())
            if n == 0:
                out.append("-" * len(out[0]))
        return "\n".join(out) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "mrr_at_10", "ndcg_at_10", "recall_at_k", "overlap", "bload",
                         "docs_evaluated", "blocks_loaded", "blocks_total", "mrt_ms", "p95_ms"])
        for r in self.rows:
            writer.writerow([r.label, f"{r.mrr:.6f}", f"{r.ndcg:.6f}", f"{r.recall:.6f}", f"{r.overlap:.6f}",
                             f"{r.bload:.6f}", r.evals, r.blocks_loaded, r.blocks_total,
                             f"{r.mrt_ms:.4f}", f"{r.p95_ms:.4f}"])
        return buf.getvalue()


def _batch(index, queries, config):
    results = {}
    traces = {}
    for qid, query in queries.items():
        try:
            res, trace = retrieve(index, query, config)
        except Exception as exc:
            raise ExperimentError(qid, exc) from exc
        results[qid] = res
        traces[qid] = trace
    return results, traces


def to_named_run(index, results):
    names = index.doc_names
    return {qid: [(names[d], s) for d, s in res] for qid, res in results.items()}


def run_grid(index, queries, qrels, configs, reference=None, warmup=True, labels=None):
    """Run every config over the query batch and summarize one row each.

    Overlap is measured against ``reference`` when given (a RetrievalConfig),
    otherwise against the exhaustive ranking with the row's own k and beta.
    Each row's queries run once untimed first when ``warmup`` is set.
    """
    configs = list(configs)
    for c in configs:
        if not isinstance(c, RetrievalConfig):
            raise ConfigError("run_grid expects RetrievalConfig instances")
    ref_cache = {}

    def reference_run(cfg):
        ref_cfg = reference or RetrievalConfig(k=cfg.k, beta=cfg.beta, algorithm="exhaustive")
        key = (ref_cfg.k, ref_cfg.beta, ref_cfg)
        if key not in ref_cache:
            ref_cache[key] = to_named_run(index, _batch(index, queries, ref_cfg)[0])
        return ref_cache[key]

    rows = []
    for i, cfg in enumerate(configs):
        if warmup:
            _batch(index, queries, cfg)
        results, traces = _batch(index, queries, cfg)
        run = to_named_run(index, results)
        times_ms = [t.elapsed * 1000.0 for t in traces.values()]
        lat = latency_summary(times_ms) if times_ms else None
        loaded = sum(t.blocks_loaded for t in traces.values())
        total = sum(t.blocks_total for t in traces.values())
        rows.append(
            ReportRow(
                label=labels[i] if labels else cfg.label(),
                config=cfg,
                mrr=mrr_at(run, qrels, 10),
                ndcg=ndcg_at(run, qrels, 10),
                recall=recall_at(run, qrels, cfg.k),
                overlap=overlap_ratio(run, reference_run(cfg), cfg.k),
                bload=loaded / total if total else 0.0,
                evals=sum(t.docs_evaluated for t in traces.values()),
                blocks_loaded=loaded,
                blocks_total=total,
                mrt_ms=lat.mean if lat else math.nan,
                p95_ms=lat.p95 if lat else math.nan,
                traces=traces,
                run=run,
            )
        )
    return ExperimentReport(rows)


def timed_batch(index, queries, config, warmup=True):
    """Per-query wall-clock seconds for one config (after an untimed pass)."""
    if warmup:
        _batch(index, queries, config)
    start = time.perf_counter()
    _, traces = _batch(index, queries, config)
    wall = time.perf_counter() - start
    return [t.elapsed for t in traces.values()], wall
