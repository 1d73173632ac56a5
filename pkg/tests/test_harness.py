import numpy as np
import pytest

from dualskip.exceptions import ConfigError, ExperimentError, ParseError
from dualskip.harness import (
    SynthSpec,
    format_corpus,
    format_queries,
    generate_corpus,
    read_queries,
    run_grid,
    write_queries,
)
from dualskip.index import build_index
from dualskip.metrics import skewness
from dualskip.retrieval import RetrievalConfig
from dualskip.scoring import QueryTerm

TINY = dict(num_docs=400, vocab_size=200, query_count=20, num_topics=5, topic_size=20)


class TestGenerator:
    def test_determinism(self):
        a = generate_corpus(SynthSpec(seed=3, **TINY))
        b = generate_corpus(SynthSpec(seed=3, **TINY))
        assert format_corpus(a[0]) == format_corpus(b[0])
        assert format_queries(a[1]) == format_queries(b[1])
        assert a[2] == b[2]

    def test_seed_matters(self):
        a = generate_corpus(SynthSpec(seed=3, **TINY))
        b = generate_corpus(SynthSpec(seed=4, **TINY))
        assert format_corpus(a[0]) != format_corpus(b[0])

    def test_right_skewed_learned_weights(self, small):
        records = small[0]
        pooled = {}
        for r in records:
            for term, w in r["impact"].items():
                pooled.setdefault(term, []).append(w)
        big = [v for v in pooled.values() if len(v) >= 30]
        assert np.mean([skewness(v) > 0 for v in big]) >= 0.95

    def test_left_skewed_shape_flips_sign(self):
        spec = SynthSpec(seed=2, learned_skew_shape=(8.0, 2.0), **TINY)
        pooled = {}
        for r in generate_corpus(spec)[0]:
            for term, w in r["impact"].items():
                pooled.setdefault(term, []).append(w)
        # per-term importance is a constant factor, which skewness ignores
        big = [v for v in pooled.values() if len(v) >= 30]
        assert np.mean([skewness(v) < 0 for v in big]) >= 0.9

    def test_no_expansion(self):
        records = generate_corpus(SynthSpec(seed=1, expansion_rate=0.0, **TINY))[0]
        assert all(r["impact"].keys() == r["tf"].keys() for r in records)
        idx = build_index(records)
        assert all(rec.w_bm25 > 0 for pl in idx.postings for rec in pl.records())

    def test_expansion_creates_bm25_zero_records(self):
        records = generate_corpus(SynthSpec(seed=1, expansion_rate=1.0, **TINY))[0]
        idx = build_index(records)
        assert any(rec.w_bm25 == 0 for pl in idx.postings for rec in pl.records())

    def test_qrels_point_at_real_docs(self, small):
        records, queries, qrels, _ = small
        names = {r["id"] for r in records}
        assert qrels.keys() == queries.keys()
        assert all(doc in names for labels in qrels.values() for doc in labels)

    @pytest.mark.parametrize("bad", [dict(num_docs=0), dict(expansion_rate=1.5),
                                     dict(learned_skew_shape=(0.0, 2.0)), dict(topic_size=5000)])
    def test_invalid_spec(self, bad):
        with pytest.raises(ConfigError):
            SynthSpec(**bad)


class TestQueryFiles:
    def test_round_trip(self, tmp_path):
        queries = {"q1": [QueryTerm("a", 1.0), QueryTerm("b", 2.5)], "q2": [QueryTerm("c", 1.0)]}
        path = tmp_path / "q.tsv"
        write_queries(queries, path)
        assert path.read_text() == "q1\ta b:2.5\nq2\tc\n"
        assert read_queries(path) == queries

    @pytest.mark.parametrize("text", ["no tab here\n", "q1\ta\nq1\tb\n", "q1\ta:-2\n"])
    def test_bad_lines(self, tmp_path, text):
        path = tmp_path / "q.tsv"
        path.write_text(text)
        with pytest.raises(ParseError):
            read_queries(path)


class TestRunGrid:
    def test_exhaustive_overlaps_itself(self, small):
        _, queries, qrels, idx = small
        cfg = RetrievalConfig(k=10, algorithm="exhaustive")
        (row,) = run_grid(idx, queries, qrels, [cfg], warmup=False).rows
        assert row.overlap == 1.0

    def test_rows_match_grid_and_traces(self, small):
        _, queries, qrels, idx = small
        configs = [RetrievalConfig(k=10, f_s=f) for f in (1.0, 1.3)] + [RetrievalConfig(k=10, view_mode="uniform")]
        report = run_grid(idx, queries, qrels, configs, warmup=False)
        assert [r.config for r in report.rows] == configs
        for row in report.rows:
            traces = row.traces.values()
            assert row.evals == sum(t.docs_evaluated for t in traces)
            assert row.blocks_loaded == sum(t.blocks_loaded for t in traces)
            assert row.bload == row.blocks_loaded / row.blocks_total

    def test_directional_patterns(self, small):
        _, queries, qrels, idx = small
        fs_grid = [RetrievalConfig(k=10, f_s=f) for f in (1.0, 1.3, 1.5, 1.7)]
        evals = [r.evals for r in run_grid(idx, queries, qrels, fs_grid, warmup=False).rows]
        assert evals == sorted(evals, reverse=True)
        views = [RetrievalConfig(k=10), RetrievalConfig(k=10, view_mode="uniform")]
        ind, uni = run_grid(idx, queries, qrels, views, warmup=False).rows
        assert uni.evals >= ind.evals

    def test_oracle_recall_dominates(self, small):
        _, queries, qrels, idx = small
        configs = [RetrievalConfig(k=10, beta=0.0, algorithm="exhaustive"), RetrievalConfig(k=10, f_s=1.7)]
        best, pruned = run_grid(idx, queries, qrels, configs, warmup=False).rows
        assert best.recall >= pruned.recall

    def test_report_formats(self, small):
        _, queries, qrels, idx = small
        report = run_grid(idx, queries, qrels, [RetrievalConfig(k=10)], warmup=False)
        text = report.to_text().splitlines()
        assert text[0].startswith("label") and len(text) == 3
        csv_lines = report.to_csv().splitlines()
        assert csv_lines[0].split(",")[0] == "label" and len(csv_lines) == 2

    def test_rejects_non_configs(self, small):
        with pytest.raises(ConfigError):
            run_grid(small[3], small[1], small[2], [{"k": 10}])

    def test_failure_names_query(self, small):
        idx = small[3]
        with pytest.raises(ExperimentError, match="bad"):
            run_grid(idx, {"bad": {"t00001": -1.0}}, {}, [RetrievalConfig(k=10)], warmup=False)
