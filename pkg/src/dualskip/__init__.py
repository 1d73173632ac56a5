"""Dual-threshold hybrid-scoring skipping over a dual-weight block-max index."""

from .estimator import DualSkipRetriever
from .exceptions import (
    BuildError,
    CodecError,
    ConfigError,
    DataError,
    DualSkipError,
    ExperimentError,
    IndexChecksumError,
    IndexLoadError,
    IndexTruncatedError,
    IndexVersionError,
    InvalidStatisticsError,
    ParseError,
    QueryMismatchError,
    UndefinedSkewnessError,
)
from .harness import SynthSpec, generate_corpus, run_grid
from .index import BuildConfig, InvertedIndex, build_index, load_index, save_index
from .metrics import mrr_at, ndcg_at, overlap_ratio, recall_at
from .retrieval import (
    RetrievalConfig,
    blockmax_traverse,
    dths_traverse,
    exhaustive_topk,
    overest_traverse,
    retrieve,
)
from .scoring import CorpusStats, QueryTerm, bm25_weight, mix_bound, mix_score

__all__ = [
    "DualSkipRetriever",
    "BuildError",
    "CodecError",
    "ConfigError",
    "DataError",
    "DualSkipError",
    "ExperimentError",
    "IndexChecksumError",
    "IndexLoadError",
    "IndexTruncatedError",
    "IndexVersionError",
    "InvalidStatisticsError",
    "ParseError",
    "QueryMismatchError",
    "UndefinedSkewnessError",
    "SynthSpec",
    "generate_corpus",
    "run_grid",
    "BuildConfig",
    "InvertedIndex",
    "build_index",
    "load_index",
    "save_index",
    "mrr_at",
    "ndcg_at",
    "overlap_ratio",
    "recall_at",
    "RetrievalConfig",
    "blockmax_traverse",
    "dths_traverse",
    "exhaustive_topk",
    "overest_traverse",
    "retrieve",
    "CorpusStats",
    "QueryTerm",
    "bm25_weight",
    "mix_bound",
    "mix_score",
]

__version__ = "0.1.0"
