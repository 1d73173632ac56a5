"""scikit-learn style wrapper around index building and DTHS retrieval."""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .index import BuildConfig, InvertedIndex, build_index, load_index
from .metrics import ndcg_at
from .retrieval import RetrievalConfig, retrieve


class DualSkipRetriever(BaseEstimator):
    """Top-k retriever whose hyperparameters are the retrieval knobs.

    ``fit`` accepts a corpus (path or iterable of records), a saved index
    path ending in ``.dski``, or an :class:`InvertedIndex`. ``predict`` maps
    ``{qid: query}`` to a run ``{qid: [(doc name, score), ...]}``.
    """

    def __init__(self, k=1000, alpha=0.9, beta=0.2, f_s=1.0, f_f=1.0, skip_mode="DT",
                 view_mode="independent", algorithm="dths", block_size=128, partition="fixed"):
        self.k = k
        self.alpha = alpha
        self.beta = beta
        self.f_s = f_s
        self.f_f = f_f
        self.skip_mode = skip_mode
        self.view_mode = view_mode
        self.algorithm = algorithm
        self.block_size = block_size
        self.partition = partition

    def _retrieval_config(self):
        return RetrievalConfig(
            k=self.k,
            alpha=self.alpha,
            beta=self.beta,
            f_s=self.f_s,
            f_f=self.f_f,
            skip_mode=self.skip_mode,
            view_mode=self.view_mode,
            algorithm=self.algorithm,
        )

    def fit(self, X, y=None):
        # Validate every hyperparameter up front, even when X is prebuilt.
        self.config_ = self._retrieval_config()
        if isinstance(X, InvertedIndex):
            self.index_ = X
        elif isinstance(X, str) and X.endswith(".dski"):
            self.index_ = load_index(X)
        else:
            self.index_ = build_index(X, BuildConfig(block_size=self.block_size, partition=self.partition))
        self.n_docs_ = self.index_.stats.num_docs
        return self

    def search(self, query):
        """(results, trace) for one query, results carrying doc names."""
        check_is_fitted(self, "index_")
        results, trace = retrieve(self.index_, query, self._retrieval_config())
        names = self.index_.doc_names
        return [(names[d], s) for d, s in results], trace

    def predict(self, X):
        check_is_fitted(self, "index_")
        config = self._retrieval_config()
        names = self.index_.doc_names
        run = {}
        for qid, query in X.items():
            results, _ = retrieve(self.index_, query, config)
            run[qid] = [(names[d], s) for d, s in results]
        return run

    def score(self, X, y):
        """NDCG@10 of ``predict(X)`` against qrels ``y``."""
        return ndcg_at(self.predict(X), y, 10)
