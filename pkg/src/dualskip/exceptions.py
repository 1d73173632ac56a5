"""Exception hierarchy shared by all dualskip modules."""


class DualSkipError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DualSkipError, ValueError):
    """A retrieval or build parameter is outside its valid range."""


class DataError(DualSkipError, ValueError):
    """Input data violates a value constraint (e.g. a negative weight)."""


class InvalidStatisticsError(DataError):
    """Corpus statistics cannot produce a BM25 weight."""


class BuildError(DualSkipError):
    """The corpus could not be turned into an index."""


class CodecError(DualSkipError):
    """A block payload is corrupt or cannot be encoded."""


class IndexLoadError(DualSkipError):
    """An index file could not be loaded."""


class IndexVersionError(IndexLoadError):
    pass


class IndexTruncatedError(IndexLoadError):
    pass


class IndexChecksumError(IndexLoadError):
    pass


class UndefinedSkewnessError(DualSkipError, ValueError):
    """Skewness is undefined for tiny or constant samples."""


class QueryMismatchError(DualSkipError, ValueError):
    """Two runs do not cover the same query ids."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(
            "runs cover different query ids; symmetric difference: "
            + ", ".join(self.missing)
        )


class ParseError(DualSkipError, ValueError):
    """A TREC run, qrels or query file line is malformed."""


class ExperimentError(DualSkipError):
    """A query failed while running an experiment grid."""

    def __init__(self, qid, cause):
        self.qid = qid
        super().__init__(f"query {qid}: {cause}")
