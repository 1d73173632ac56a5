import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dualskip import DualSkipRetriever
from dualskip.exceptions import ConfigError
from dualskip.harness import to_named_run
from dualskip.index import save_index
from dualskip.metrics import ndcg_at
from dualskip.retrieval import RetrievalConfig, exhaustive_topk


class TestParams:
    def test_get_set_clone(self):
        est = DualSkipRetriever(k=10, f_s=1.3)
        assert est.get_params()["f_s"] == 1.3
        est.set_params(alpha=0.5)
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "index_")

    def test_invalid_params_fail_at_fit(self, small):
        with pytest.raises(ConfigError):
            DualSkipRetriever(alpha=2.0).fit(small[3])

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            DualSkipRetriever().predict({"q": "a"})


class TestFitPredict:
    def test_fit_forms_agree(self, small, tmp_path):
        records, queries, _, idx = small
        path = tmp_path / "s.dski"
        save_index(idx, path)
        est = DualSkipRetriever(k=10, block_size=16)
        qs = dict(list(queries.items())[:10])
        runs = [est.fit(x).predict(qs) for x in (idx, str(path), records)]
        assert runs[0] == runs[1] == runs[2]
        assert est.n_docs_ == len(records)

    def test_safe_params_match_oracle(self, small):
        _, queries, _, idx = small
        est = DualSkipRetriever(k=10, alpha=0.2, beta=0.2).fit(idx)
        expected = {qid: exhaustive_topk(idx, q, 10, 0.2) for qid, q in queries.items()}
        assert est.predict(queries) == to_named_run(idx, expected)

    def test_score_is_ndcg(self, small):
        _, queries, qrels, idx = small
        est = DualSkipRetriever(k=10).fit(idx)
        assert est.score(queries, qrels) == ndcg_at(est.predict(queries), qrels, 10)

    def test_search_returns_trace(self, small):
        _, queries, _, idx = small
        est = DualSkipRetriever(k=5).fit(idx)
        results, trace = est.search(next(iter(queries.values())))
        assert len(results) <= 5 and trace.blocks_loaded <= trace.blocks_total
        assert est.config_ == RetrievalConfig(k=5)
