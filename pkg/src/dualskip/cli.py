"""Command-line entry point: ``dualskip {build,query,eval,stats,bench,synth}``.

Exit codes: 0 on success, 1 on bad input data or files, 2 on usage errors
(argparse rejects bad flags and out-of-range parameters before any file is
opened).
"""

import argparse
import csv
import math
import os
import sys
import warnings

import numpy as np

from .codec import decode_arrays
from .exceptions import ConfigError, DualSkipError, UndefinedSkewnessError
from .harness import SynthSpec, generate_corpus, read_queries, run_grid, write_corpus, write_queries
from .index import PARTITIONS, BuildConfig, build_index, load_index, save_index
from .metrics import (
    MissingQrelsWarning,
    missing_queries,
    mrr_at,
    ndcg_at,
    overlap_ratio,
    read_qrels,
    read_run,
    recall_at,
    skewness,
    write_qrels,
    write_run,
)
from .retrieval import ALGORITHMS, RetrievalConfig, retrieve
from .scoring import DEFAULT_B, DEFAULT_K1

HIST_BINS = 20
STATS_COLUMNS = ["term", "channel", "count", "min", "max", "mean", "skewness"] + [
    f"bin_{i:02d}" for i in range(HIST_BINS)
]
TRACE_COLUMNS = ["qid", "blocks_loaded", "blocks_total", "docs_evaluated", "elapsed_us"]
DEFAULT_METRICS = "mrr@10,ndcg@10,recall@1000"
METRIC_NAMES = ("mrr", "ndcg", "recall", "overlap")


# -- argument types ----------------------------------------------------------


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _unit(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _factor(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(value) and value >= 1.0):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 1, got {value}")
    return value


def _positive_real(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _beta_shape(text):
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    if not (a > 0 and b > 0):
        raise argparse.ArgumentTypeError("Beta parameters must be > 0")
    return (a, b)


def parse_metric(name):
    """``"ndcg@10"`` -> ``("ndcg", 10)``; raises ValueError when malformed."""
    base, sep, cutoff = name.strip().lower().partition("@")
    if base not in METRIC_NAMES or not sep:
        raise ValueError(f"unknown metric {name!r}; expected one of mrr@N, ndcg@N, recall@N, overlap@N")
    cutoff = int(cutoff)
    if cutoff < 1:
        raise ValueError(f"metric cutoff must be >= 1 in {name!r}")
    return base, cutoff


_CONFIG_KEYS = {
    "k": ("k", int),
    "alpha": ("alpha", float),
    "beta": ("beta", float),
    "fs": ("f_s", float),
    "ff": ("f_f", float),
    "skip": ("skip_mode", str),
    "view": ("view_mode", str),
    "algo": ("algorithm", str),
}


def parse_config(text):
    """``"algo=dths,alpha=0.9,fs=1.3"`` -> RetrievalConfig."""
    kwargs = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key.strip().lower() not in _CONFIG_KEYS:
            raise ConfigError(f"bad config item {item!r}; keys are {', '.join(_CONFIG_KEYS)}")
        name, cast = _CONFIG_KEYS[key.strip().lower()]
        kwargs[name] = cast(value.strip())
    return RetrievalConfig(**kwargs)


def _config_type(text):
    try:
        return parse_config(text)
    except (ValueError, DualSkipError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- subcommands ---------------------------------------------------------------


def cmd_build(args):
    config = BuildConfig(block_size=args.block_size, partition=args.partition, k1=args.k1, b=args.b)
    if not os.path.isfile(args.corpus):
        raise FileNotFoundError(f"corpus file not found: {args.corpus}")
    index = build_index(args.corpus, config)
    save_index(index, args.out)
    print(f"docs\t{index.stats.num_docs}")
    print(f"terms\t{index.num_terms}")
    print(f"postings\t{index.num_postings}")
    print(f"blocks\t{index.num_blocks}")
    print(f"bytes\t{os.path.getsize(args.out)}")
    return 0


def _query_config(args):
    return RetrievalConfig(
        k=args.k,
        alpha=args.alpha,
        beta=args.beta,
        f_s=args.fs,
        f_f=args.ff,
        skip_mode=args.skip,
        view_mode=args.view,
        algorithm=args.algo,
    )


def cmd_query(args):
    config = _query_config(args)
    index = load_index(args.index)
    queries = read_queries(args.queries)
    names = index.doc_names
    run = {}
    traces = []
    for qid, query in queries.items():
        results, trace = retrieve(index, query, config)
        run[qid] = [(names[d], score) for d, score in results]
        traces.append((qid, trace))
    write_run(run, args.out, args.run_tag)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for qid, t in traces:
                writer.writerow([qid, t.blocks_loaded, t.blocks_total, t.docs_evaluated,
                                 int(round(t.elapsed * 1e6))])
    return 0


def cmd_eval(args, parser):
    names = [m for m in (s.strip() for s in args.metrics.split(",")) if m]
    if not names:
        parser.error("--metrics needs at least one metric")
    try:
        metrics = [parse_metric(m) for m in names]
    except ValueError as exc:
        parser.error(str(exc))
    if any(base == "overlap" for base, _ in metrics) and not args.baseline_run:
        parser.error("overlap@N needs --baseline-run")

    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    baseline = read_run(args.baseline_run) if args.baseline_run else None
    if baseline is not None and not any(base == "overlap" for base, _ in metrics):
        depth = max((len(r) for r in run.values()), default=1)
        metrics.append(("overlap", max(depth, 1)))

    missing = missing_queries(run, qrels)
    if missing:
        print(f"warning: {len(missing)} run queries have no qrels: {' '.join(missing)}", file=sys.stderr)
    unjudged = sorted(q for q in qrels if q not in run)
    if unjudged:
        print(f"warning: {len(unjudged)} qrels queries missing from the run: {' '.join(unjudged)}",
              file=sys.stderr)

    funcs = {"mrr": mrr_at, "ndcg": ndcg_at, "recall": recall_at}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingQrelsWarning)
        for base, cutoff in metrics:
            if base == "overlap":
                value = overlap_ratio(run, baseline, cutoff)
            else:
                value = funcs[base](run, qrels, cutoff)
            print(f"{base}@{cutoff}\t{value:.4f}")
    return 0


def _fmt(x):
    return f"{x:.6g}"


def term_stat_rows(index, term):
    """Two CSV rows (bm25, learned) describing one term's nonzero weights."""
    wb, wl = [], []
    for block in index.posting_list(term).blocks:
        _, b, l = decode_arrays(block.payload)
        wb.append(b)
        wl.append(l)
    rows = []
    for channel, chunks in (("bm25", wb), ("learned", wl)):
        w = np.concatenate(chunks).astype(np.float64) if chunks else np.zeros(0)
        w = w[w > 0] / index.scale
        if w.size == 0:
            rows.append([term, channel, 0, "", "", "", "undefined"] + [0] * HIST_BINS)
            continue
        lo, hi = float(w.min()), float(w.max())
        try:
            skew = _fmt(skewness(w))
        except UndefinedSkewnessError:
            skew = "undefined"
        scaled = (w - lo) / (hi - lo) if hi > lo else np.zeros_like(w)
        hist, _ = np.histogram(scaled, bins=HIST_BINS, range=(0.0, 1.0))
        rows.append([term, channel, int(w.size), _fmt(lo), _fmt(hi), _fmt(float(w.mean())), skew]
                    + hist.tolist())
    return rows


def cmd_stats(args):
    index = load_index(args.index)
    if args.terms.strip().lower() == "all":
        terms = index.terms()
    else:
        terms = [t for t in (s.strip() for s in args.terms.split(",")) if t]
    unknown = [t for t in terms if index.posting_list(t) is None]
    if unknown:
        print(f"unknown terms: {' '.join(unknown)}", file=sys.stderr)
    known = [t for t in terms if index.posting_list(t) is not None]
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(STATS_COLUMNS)
        for term in known:
            writer.writerows(term_stat_rows(index, term))
    finally:
        if args.out:
            out.close()
    return 0 if known or not terms else 1


def cmd_bench(args):
    index = load_index(args.index)
    queries = read_queries(args.queries)
    qrels = read_qrels(args.qrels) if args.qrels else {}
    configs = args.config or [RetrievalConfig()]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingQrelsWarning)
        report = run_grid(index, queries, qrels, configs, reference=args.reference,
                          warmup=not args.no_warmup)
    sys.stdout.write(report.to_text())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as f:
            f.write(report.to_csv())
    return 0


def cmd_synth(args):
    spec = SynthSpec(
        num_docs=args.docs,
        vocab_size=args.vocab,
        doc_len_mean=args.doc_len,
        query_count=args.queries,
        query_len_mean=args.query_len,
        learned_skew_shape=args.learned_skew,
        expansion_rate=args.expansion_rate,
        seed=args.seed,
    )
    records, queries, qrels = generate_corpus(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    write_corpus(records, os.path.join(args.out_dir, "corpus.jsonl"))
    write_queries(queries, os.path.join(args.out_dir, "queries.tsv"))
    write_qrels(qrels, os.path.join(args.out_dir, "qrels.txt"))
    print(f"wrote {len(records)} docs, {len(queries)} queries to {args.out_dir}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_retrieval_flags(p):
    p.add_argument("--k", type=_positive_int, default=1000)
    p.add_argument("--alpha", type=_unit, default=0.9, help="BM25 weight in the skip bound")
    p.add_argument("--beta", type=_unit, default=0.2, help="BM25 weight in the final score")
    p.add_argument("--fs", type=_factor, default=1.0, help="over-estimation factor on Theta_s")
    p.add_argument("--ff", type=_factor, default=1.0, help="over-estimation factor on Theta_f")
    p.add_argument("--skip", type=str.upper, choices=("ST", "DT"), default="DT")
    p.add_argument("--view", type=str.lower, choices=("independent", "uniform"), default="independent")
    p.add_argument("--algo", type=str.lower, choices=ALGORITHMS, default="dths")


def build_parser():
    parser = argparse.ArgumentParser(prog="dualskip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build an index from a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--block-size", type=_positive_int, default=128)
    p.add_argument("--partition", type=str.lower, choices=PARTITIONS, default="fixed")
    p.add_argument("--k1", type=_positive_real, default=DEFAULT_K1)
    p.add_argument("--b", type=_unit, default=DEFAULT_B)

    p = sub.add_parser("query", help="run a query file and write a TREC run")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    _add_retrieval_flags(p)
    p.add_argument("--run-tag", default="dualskip")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="optional per-query trace CSV")

    p = sub.add_parser("eval", help="score a TREC run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default=DEFAULT_METRICS)
    p.add_argument("--baseline-run", help="adds overlap@k against this run")
    p.set_defaults(subparser=p)

    p = sub.add_parser("stats", help="per-term weight distribution statistics")
    p.add_argument("--index", required=True)
    p.add_argument("--terms", default="all", help="'all' or a comma-separated term list")
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("bench", help="run a grid of configurations and print a report")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels")
    p.add_argument("--config", type=_config_type, action="append",
                   help="key=value list, e.g. algo=dths,fs=1.3 (repeatable)")
    p.add_argument("--reference", type=_config_type,
                   help="overlap reference config (default: exhaustive at each row's k and beta)")
    p.add_argument("--csv")
    p.add_argument("--no-warmup", action="store_true")

    p = sub.add_parser("synth", help="write a synthetic corpus, queries and qrels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--docs", type=_positive_int, default=10000)
    p.add_argument("--vocab", type=_positive_int, default=2000)
    p.add_argument("--doc-len", type=_positive_real, default=20.0)
    p.add_argument("--queries", type=_positive_int, default=500)
    p.add_argument("--query-len", type=_positive_int, default=3)
    p.add_argument("--learned-skew", type=_beta_shape, default=(2.0, 8.0))
    p.add_argument("--expansion-rate", type=_unit, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args, args.subparser)
        handler = {
            "build": cmd_build,
            "query": cmd_query,
            "stats": cmd_stats,
            "bench": cmd_bench,
            "synth": cmd_synth,
        }[args.command]
        return handler(args)
    except (DualSkipError, OSError) as exc:
        print(f"dualskip {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
