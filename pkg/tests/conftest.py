import pytest

from dualskip.harness import SynthSpec, generate_corpus
from dualskip.index import BuildConfig, build_index

# criterion number -> [description, outcomes, notes]
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion covered by the test")
    config.addinivalue_line("markers", "slow: builds a 100k-doc corpus")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            n, text = mark.args
            _CRITERIA.setdefault(n, [text, [], []])
            item.user_properties.append(("criterion", n))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    entry = _CRITERIA[crit]
    if report.when == "call" or report.outcome != "passed":
        if report.outcome != "passed" and hasattr(report, "wasxfail"):
            entry[1].append("xfail")
        else:
            entry[1].append(report.outcome)
    for name, value in report.user_properties:
        if name == "note":
            entry[2].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        text, outcomes, notes = _CRITERIA[n]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        line = f"criterion {n:2d} [{status}] {text}"
        if notes:
            line += " | " + "; ".join(dict.fromkeys(notes))
        tr.write_line(line)


@pytest.fixture(scope="session")
def synth10k():
    """The desk-scale corpus: 10k docs, vocab 2k, 500 queries."""
    records, queries, qrels = generate_corpus(SynthSpec(num_docs=10000, query_count=500, seed=11))
    return records, queries, qrels


@pytest.fixture(scope="session")
def index10k(synth10k):
    return build_index(synth10k[0], BuildConfig(block_size=128))


@pytest.fixture(scope="session")
def small():
    """A fast 1500-doc corpus for module tests."""
    records, queries, qrels = generate_corpus(
        SynthSpec(num_docs=1500, vocab_size=600, query_count=60, num_topics=15, topic_size=30, seed=5)
    )
    return records, queries, qrels, build_index(records, BuildConfig(block_size=16))
