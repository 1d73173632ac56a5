import json
import math

import numpy as np
import pytest

from dualskip.codec import PostingRecord
from dualskip.exceptions import (
    BuildError,
    ConfigError,
    IndexChecksumError,
    IndexLoadError,
    IndexTruncatedError,
    IndexVersionError,
)
from dualskip.index import (
    BuildConfig,
    block_cuts,
    build_index,
    dumps_index,
    load_index,
    loads_index,
    make_block,
    partition_blocks,
    save_index,
)
from dualskip.scoring import CorpusStats, bm25_weight, quantize_weight


def one_doc_index():
    return build_index([{"id": "d0", "text": "a a b", "impact": {"a": 5, "b": 2}}])


def decoded(index, term):
    return index.posting_list(term).records()


class TestBuild:
    def test_one_doc_example(self):
        idx = one_doc_index()
        stats = CorpusStats(num_docs=1, avg_doc_len=3.0)
        s = idx.scale
        assert s == pytest.approx(0xFFFF / 5)
        assert decoded(idx, "a") == [
            PostingRecord(0, quantize_weight(bm25_weight(2, 1, 3, stats), s), quantize_weight(5, s))
        ]
        assert decoded(idx, "b") == [
            PostingRecord(0, quantize_weight(bm25_weight(1, 1, 3, stats), s), quantize_weight(2, s))
        ]

    def test_empty_corpus(self):
        idx = build_index([])
        assert idx.stats.num_docs == 0 and idx.num_terms == 0 and idx.num_postings == 0

    def test_expansion_only_term(self):
        idx = build_index([{"id": "x", "tf": {"a": 1}, "impact": {"a": 1.0, "z": 3.0}}])
        (rec,) = decoded(idx, "z")
        assert rec.w_bm25 == 0 and rec.w_learned > 0

    def test_tf_only_term_keeps_zero_learned(self):
        idx = build_index([{"id": "x", "tf": {"a": 1, "b": 2}, "impact": {"a": 1.0}}])
        (rec,) = decoded(idx, "b")
        assert rec.w_bm25 > 0 and rec.w_learned == 0

    def test_duplicate_id(self):
        with pytest.raises(BuildError, match="duplicate"):
            build_index([{"id": "a", "tf": {"x": 1}}, {"id": "a", "tf": {"x": 1}}])

    def test_malformed_line_is_named(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "tf": {"x": 1}}\n{not json}\n')
        with pytest.raises(BuildError, match=r"c\.jsonl:2"):
            build_index(str(path))

    @pytest.mark.parametrize(
        "record",
        [{"tf": {"a": 1}}, {"id": "a", "tf": {"a": -1}}, {"id": "a", "impact": {"a": "x"}}, ["a"]],
    )
    def test_bad_records(self, record):
        with pytest.raises(BuildError):
            build_index([record])

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            BuildConfig(block_size=0)
        with pytest.raises(ConfigError):
            BuildConfig(partition="dynamic")

    def test_invariants(self, small):
        idx = small[3]
        for plist in idx.postings:
            recs = plist.records()
            docs = [r.doc_id for r in recs]
            assert docs == sorted(set(docs)) and len(recs) == plist.doc_count
            for block in plist.blocks:
                br = block.records()
                assert block.max_doc_id == br[-1].doc_id
                assert block.max_bm25 == max(r.w_bm25 for r in br)
                assert block.max_learned == max(r.w_learned for r in br)
                assert 1 <= block.record_count == len(br) <= 16
                assert all(r.w_bm25 or r.w_learned for r in br)
            assert plist.list_max_bm25 == max(b.max_bm25 for b in plist.blocks)
            assert plist.list_max_learned == max(b.max_learned for b in plist.blocks)

    def test_learned_channel_copied(self, small):
        records, _, _, idx = small
        impact = records[7]["impact"]
        for term, w in impact.items():
            recs = {r.doc_id: r for r in decoded(idx, term)}
            assert recs[7].w_learned == quantize_weight(w, idx.scale)


class TestPartition:
    def test_fixed_sizes(self):
        recs = [(i, 1, 1) for i in range(10)]
        assert [len(b) for b in partition_blocks(recs, "fixed", 4)] == [4, 4, 2]

    def test_singleton(self):
        (block,) = partition_blocks([(3, 7, 9)], "variable", 4)
        b = make_block(*zip(*block))
        assert (b.max_doc_id, b.max_bm25, b.max_learned) == (3, 7, 9)

    def test_empty(self):
        assert partition_blocks([], "fixed", 4) == []

    @pytest.mark.parametrize("seed", range(5))
    def test_variable_properties(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(300, 3000))
        learned = (rng.beta(2, 8, size=n) * 1000).astype(int).tolist()
        recs = [(i * 3, int(rng.integers(0, 500)), w) for i, w in enumerate(learned)]
        blocks = partition_blocks(recs, "variable", 64)
        assert [r for b in blocks for r in b] == recs
        assert abs(n / len(blocks) - 64) <= 0.2 * 64
        for b in blocks:
            blk = make_block(*zip(*b))
            assert blk.max_bm25 == max(r[1] for r in b)
            assert blk.max_learned == max(r[2] for r in b)

    def test_variable_tightens_learned_maxima(self):
        rng = np.random.default_rng(3)
        learned = (rng.beta(2, 8, size=4000) * 1000).astype(int)
        def slack_sum(cuts):
            edges = cuts + [learned.size]
            return sum(learned[a:b].max() * (b - a) - learned[a:b].sum() for a, b in zip(edges, edges[1:]))
        assert slack_sum(block_cuts(learned, "variable", 64)) <= slack_sum(block_cuts(learned, "fixed", 64))

    def test_explicit_slack_respects_size_limits(self):
        learned = [1, 100] * 200
        cuts = block_cuts(learned, "variable", 10, slack=0.0)
        sizes = np.diff(cuts + [len(learned)])
        assert sizes[:-1].min() >= 5 and sizes.max() <= 20


class TestPersistence:
    def test_round_trip_one_doc(self, tmp_path):
        idx = one_doc_index()
        path = tmp_path / "one.dski"
        save_index(idx, path)
        assert load_index(path) == idx

    def test_round_trip_empty(self):
        idx = build_index([])
        assert loads_index(dumps_index(idx)) == idx

    def test_round_trip_synthetic(self, small):
        idx = small[3]
        assert loads_index(dumps_index(idx)) == idx

    def test_magic_header(self):
        assert dumps_index(one_doc_index())[:4] == b"DSKI"

    def test_truncated(self):
        data = dumps_index(one_doc_index())
        for cut in (3, 10, len(data) // 2, len(data) - 1):
            with pytest.raises(IndexTruncatedError):
                loads_index(data[:cut])

    def test_version_mismatch(self):
        data = bytearray(dumps_index(one_doc_index()))
        data[4] = 99
        with pytest.raises(IndexVersionError):
            loads_index(bytes(data))

    def test_checksum(self):
        data = bytearray(dumps_index(one_doc_index()))
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(IndexChecksumError):
            loads_index(bytes(data))

    def test_bad_magic(self):
        with pytest.raises(IndexLoadError):
            loads_index(b"NOPE" + bytes(40))

    def test_deterministic_bytes(self, small):
        records = small[0]
        assert dumps_index(build_index(records)) == dumps_index(build_index(json.loads(json.dumps(records))))

    def test_scale_recorded(self):
        idx = build_index([{"id": "a", "tf": {"x": 1}, "impact": {"x": 2.5}}], BuildConfig(scale=100.0))
        assert loads_index(dumps_index(idx)).scale == 100.0
        assert math.isclose(decoded(idx, "x")[0].w_learned / idx.scale, 2.5)
