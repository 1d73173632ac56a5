"""Document-at-a-time top-k retrieval over the dual-weight block-max index.

Four controllers share one traversal loop:

* ``exhaustive``: score every candidate, no skipping (the oracle).
* ``blockmax``: rank-safe block-max pruning on ``mix(., beta)``.
* ``blockmax_overest``: the same with the threshold multiplied by ``f_s``.
* ``dths``: two top-k queues (skip-oriented, mixed with ``alpha``; final,
  mixed with ``beta``), single- or dual-threshold skipping and an
  independent or uniform eviction policy.

Channel sums are taken with ``math.fsum`` so they do not depend on the order
cursors happen to be in; together with the monotone mix this makes every
bound provably >= the score it bounds, and makes the safe configurations
reproduce the oracle bit for bit.
"""

import heapq
import math
import time
from bisect import bisect_left
from dataclasses import dataclass, field
from operator import attrgetter
from typing import NamedTuple

from ._validation import check_choice, check_factor, check_positive_int, check_unit_interval
from .codec import decode_arrays
from .exceptions import ConfigError
from .scoring import QueryTerm, ScorePair, _mix

END = 1 << 62

ALGORITHMS = ("exhaustive", "blockmax", "blockmax_overest", "dths")
SKIP_MODES = ("ST", "DT")
VIEW_MODES = ("independent", "uniform")


@dataclass(frozen=True)
class RetrievalConfig:
    """Retrieval parameters; defaults are the default DTHS setting.

    ``blockmax`` and ``blockmax_overest`` rank and bound with ``beta`` alone
    and use ``f_s`` as their single over-estimation factor.
    """

    k: int = 1000
    alpha: float = 0.9
    beta: float = 0.2
    f_s: float = 1.0
    f_f: float = 1.0
    skip_mode: str = "DT"
    view_mode: str = "independent"
    algorithm: str = "dths"

    def __post_init__(self):
        values = dict(
            k=check_positive_int(self.k, "k"),
            alpha=check_unit_interval(self.alpha, "alpha"),
            beta=check_unit_interval(self.beta, "beta"),
            f_s=check_factor(self.f_s, "f_s"),
            f_f=check_factor(self.f_f, "f_f"),
            skip_mode=check_choice(self.skip_mode, "skip_mode", SKIP_MODES),
            view_mode=check_choice(self.view_mode, "view_mode", VIEW_MODES),
            algorithm=check_choice(self.algorithm, "algorithm", ALGORITHMS),
        )
        for name, value in values.items():
            object.__setattr__(self, name, value)

    def label(self):
        if self.algorithm == "exhaustive":
            return f"exhaustive b={self.beta:g} k={self.k}"
        if self.algorithm == "blockmax":
            return f"blockmax b={self.beta:g} k={self.k}"
        if self.algorithm == "blockmax_overest":
            return f"blockmax b={self.beta:g} F={self.f_s:g} k={self.k}"
        return (
            f"dths a={self.alpha:g} b={self.beta:g} Fs={self.f_s:g} Ff={self.f_f:g} "
            f"{self.skip_mode} {self.view_mode} k={self.k}"
        )


class TopKQueue:
    """Bounded queue of (doc_id, score) ordered by (score desc, doc_id asc).

    Removal of arbitrary members is lazy: the member map is authoritative
    and stale heap entries are discarded when they surface.
    """

    __slots__ = ("capacity", "_heap", "_alive")

    def __init__(self, capacity):
        self.capacity = capacity
        self._heap = []
        self._alive = {}

    def __len__(self):
        return len(self._alive)

    def __contains__(self, doc_id):
        return doc_id in self._alive

    def push(self, doc_id, score):
        self._alive[doc_id] = score
        heapq.heappush(self._heap, (score, -doc_id))

    def lowest(self):
        """(doc_id, score) of the lowest-ranked member."""
        heap = self._heap
        while -heap[0][1] not in self._alive:
            heapq.heappop(heap)
        score, neg = heap[0]
        return -neg, score

    def offer(self, doc_id, score):
        """Insert if it ranks above the lowest member of a full queue.

        Returns the evicted doc id (``doc_id`` itself when it did not make
        it), or None when nothing had to leave.
        """
        alive = self._alive
        heap = self._heap
        entry = (score, -doc_id)
        if len(alive) < self.capacity:
            alive[doc_id] = score
            heapq.heappush(heap, entry)
            return None
        while -heap[0][1] not in alive:
            heapq.heappop(heap)
        if entry < heap[0]:
            return doc_id
        _, neg = heapq.heapreplace(heap, entry)
        del alive[-neg]
        alive[doc_id] = score
        return -neg

    def lowest_key(self):
        doc, score = self.lowest()
        return score, -doc

    def remove(self, doc_id):
        del self._alive[doc_id]
        heap = self._heap
        if heap and heap[0][1] == -doc_id:
            heapq.heappop(heap)

    @property
    def threshold(self):
        """k-th largest score when full, else 0."""
        if len(self._alive) < self.capacity:
            return 0.0
        return self.lowest()[1]

    def doc_ids(self):
        return set(self._alive)

    def score_of(self, doc_id):
        return self._alive[doc_id]

    def ranked(self):
        return sorted(self._alive.items(), key=lambda item: (-item[1], item[0]))


@dataclass
class DualQueueState:
    q_s: TopKQueue
    q_f: TopKQueue

    @classmethod
    def empty(cls, k):
        return cls(TopKQueue(k), TopKQueue(k))

    @property
    def theta_s(self):
        return self.q_s.threshold

    @property
    def theta_f(self):
        return self.q_f.threshold


class SkipEvent(NamedTuple):
    """One recorded skip: every doc in [lo, hi) was bounded by the pair."""

    lo: int
    hi: int
    bound_bm25: float
    bound_learned: float
    threshold_s: float
    threshold_f: float
    reason: str  # "s" or "f": which scaled threshold the bound fell below
    lists: tuple = ()  # query-term positions whose maxima make up the bound


@dataclass
class QueryTrace:
    blocks_loaded: int = 0
    blocks_total: int = 0
    docs_evaluated: int = 0
    skipped_by_s: int = 0
    skipped_by_f: int = 0
    elapsed: float = 0.0
    results: list = field(default_factory=list)
    dropped_terms: int = 0
    bound_violations: int = 0
    events: list = None


def _skip_reason(bb, bl, thr_s, thr_f, alpha, beta, dual):
    if _mix(bb, bl, alpha) < thr_s:
        return "s"
    if dual and _mix(bb, bl, beta) < thr_f:
        return "f"
    return None


def skip_decision(bound_pair, state, config):
    """True when a candidate with channel bounds ``bound_pair`` is skipped.

    ST skips iff Bound(d, alpha) < F_s * Theta_s; DT additionally skips when
    Bound(d, beta) < F_f * Theta_f.
    """
    return (
        _skip_reason(
            bound_pair[0],
            bound_pair[1],
            config.f_s * state.theta_s,
            config.f_f * state.theta_f,
            config.alpha,
            config.beta,
            config.skip_mode == "DT",
        )
        is not None
    )


def dual_insert(doc_id, scores, state, config):
    """Insert a fully scored document into both queues, evicting per view mode."""
    sb, sl = scores
    _insert_mixed(
        doc_id,
        _mix(sb, sl, config.alpha),
        _mix(sb, sl, config.beta),
        state.q_s,
        state.q_f,
        config.k,
        config.view_mode == "uniform",
    )
    return state


def _insert_mixed(doc_id, s_score, f_score, q_s, q_f, k, uniform):
    if len(q_f) >= k:
        key = -doc_id
        if (s_score, key) < q_s.lowest_key() and (f_score, key) < q_f.lowest_key():
            # It would be the lowest in both queues: x == y == doc_id.
            return
    q_s.push(doc_id, s_score)
    q_f.push(doc_id, f_score)
    if len(q_f) > k:
        x = q_s.lowest()[0]
        y = q_f.lowest()[0]
        if x == y:
            q_s.remove(x)
            q_f.remove(x)
        elif uniform:
            q_s.remove(y)
            q_f.remove(y)
        else:
            q_s.remove(x)
            q_f.remove(y)


# -- query handling ------------------------------------------------------------


def parse_query(query):
    """Normalize a query into a list of :class:`QueryTerm`.

    Accepts a string (``"term term:2.5"``), a mapping of term -> weight, or a
    sequence of terms / ``(term, weight)`` pairs. Repeated terms have their
    weights summed; first-occurrence order is kept.
    """
    if isinstance(query, str):
        items = []
        for token in query.split():
            term, sep, weight = token.rpartition(":")
            if sep and term:
                try:
                    items.append((term, float(weight)))
                    continue
                except ValueError:
                    pass
            items.append((token, 1.0))
    elif isinstance(query, dict):
        items = list(query.items())
    else:
        items = [(q, 1.0) if isinstance(q, str) else (q[0], q[1]) for q in query]
    merged = {}
    for term, weight in items:
        weight = float(weight)
        if not weight >= 0 or not math.isfinite(weight):
            raise ConfigError(f"query weight for {term!r} must be a finite number >= 0")
        merged[term] = merged.get(term, 0.0) + weight
    return [QueryTerm(t, w) for t, w in merged.items()]


def resolve_query(index, query):
    """Map query terms to posting lists; returns ``(resolved, dropped)``.

    ``resolved`` holds ``(posting_list, weight)`` in query order. Unknown or
    empty-list terms are dropped and counted.
    """
    resolved = []
    dropped = 0
    for term, weight in parse_query(query):
        plist = index.posting_list(term)
        if plist is None or not plist.blocks:
            dropped += 1
        else:
            resolved.append((plist, weight))
    return resolved, dropped


# -- oracle --------------------------------------------------------------------


def exhaustive_topk(index, query, k, beta):
    """Score every document touching a query term; no skipping at all."""
    k = check_positive_int(k, "k")
    beta = check_unit_interval(beta, "beta")
    resolved, _ = resolve_query(index, query)
    return _exhaustive(index, resolved, k, beta)[0]


def _exhaustive(index, resolved, k, beta):
    acc = {}
    for plist, weight in resolved:
        factor = weight / index.scale
        for block in plist.blocks:
            for doc, qb, ql in block.records():
                channels = acc.get(doc)
                if channels is None:
                    channels = acc[doc] = ([], [])
                channels[0].append(qb * factor)
                channels[1].append(ql * factor)
    scored = [(_mix(math.fsum(b), math.fsum(l), beta), doc) for doc, (b, l) in acc.items()]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [(doc, score) for score, doc in scored[:k]], len(acc)


# -- traversal -----------------------------------------------------------------


class _Cursor:
    __slots__ = (
        "n", "factor", "ub_b", "ub_l", "max_docs", "max_b", "max_l", "payloads",
        "bi", "dbi", "docs", "wb", "wl", "pos", "doc", "real", "trace", "slot",
    )

    def __init__(self, plist, weight, scale, trace, slot=0):
        factor = weight / scale
        blocks = plist.blocks
        self.n = len(blocks)
        self.factor = factor
        self.ub_b = plist.list_max_bm25 * factor
        self.ub_l = plist.list_max_learned * factor
        self.max_docs = [blk.max_doc_id for blk in blocks]
        self.max_b = [blk.max_bm25 * factor for blk in blocks]
        self.max_l = [blk.max_learned * factor for blk in blocks]
        self.payloads = [blk.payload for blk in blocks]
        self.bi = 0
        self.dbi = -1
        self.docs = self.wb = self.wl = None
        self.pos = 0
        # Virtual position: a lower bound on the next posting, not yet decoded.
        self.doc = 0
        self.real = False
        self.trace = trace
        self.slot = slot

    def _load(self, bi):
        docs, wb, wl = decode_arrays(self.payloads[bi])
        self.docs = docs.tolist()
        self.wb = (wb * self.factor).tolist()
        self.wl = (wl * self.factor).tolist()
        self.dbi = bi
        self.trace.blocks_loaded += 1

    def exhaust(self):
        self.bi = self.n
        self.doc = END
        self.real = True

    def seek(self, target):
        """Move to the first real posting >= target, decoding if needed."""
        if self.real and self.doc >= target:
            return
        if target < self.doc:
            target = self.doc
        bi = self.bi
        if self.max_docs[bi] < target:
            bi = bisect_left(self.max_docs, target, bi + 1)
            if bi == self.n:
                self.exhaust()
                return
            self.bi = bi
        if self.dbi != bi:
            self._load(bi)
            lo = 0
        else:
            lo = self.pos
        pos = bisect_left(self.docs, target, lo)
        self.pos = pos
        self.doc = self.docs[pos]
        self.real = True

    def skip_to(self, target):
        """Pass every posting < target without decoding new blocks."""
        if self.doc >= target:
            return
        bi = self.bi
        if self.max_docs[bi] < target:
            bi = bisect_left(self.max_docs, target, bi + 1)
            if bi == self.n:
                self.exhaust()
                return
            self.bi = bi
        if bi == self.dbi:
            pos = bisect_left(self.docs, target, self.pos)
            self.pos = pos
            self.doc = self.docs[pos]
            self.real = True
        else:
            prev = self.max_docs[bi - 1] + 1 if bi else 0
            self.doc = target if target > prev else prev
            self.real = False

    def advance(self):
        pos = self.pos + 1
        if pos < len(self.docs):
            self.pos = pos
            self.doc = self.docs[pos]
            return
        bi = self.bi + 1
        self.bi = bi
        if bi == self.n:
            self.doc = END
        else:
            self.doc = self.max_docs[bi - 1] + 1
            self.real = False


class _DualController:
    def __init__(self, config, trace):
        self.config = config
        self.trace = trace
        self.state = DualQueueState.empty(config.k)
        self.k = config.k
        self.alpha = config.alpha
        self.beta = config.beta
        self.f_s = config.f_s
        self.f_f = config.f_f
        self.dual = config.skip_mode == "DT"
        self.uniform = config.view_mode == "uniform"
        self.pivot_weight = config.alpha
        self.pivot_threshold = 0.0
        self.thr_f = 0.0
        # Lowest (score, -doc) keys of both queues once they are full.
        self.floor_s = self.floor_f = None

    def reason(self, bb, bl):
        return _skip_reason(bb, bl, self.pivot_threshold, self.thr_f, self.alpha, self.beta, self.dual)

    def insert(self, doc, sb, sl):
        s_score = _mix(sb, sl, self.alpha)
        f_score = _mix(sb, sl, self.beta)
        floor_s = self.floor_s
        if floor_s is not None and (s_score, -doc) < floor_s and (f_score, -doc) < self.floor_f:
            return
        q_s, q_f = self.state.q_s, self.state.q_f
        if self.uniform:
            _insert_mixed(doc, s_score, f_score, q_s, q_f, self.k, True)
        else:
            # Each queue drops its own lowest member, so the two evolve
            # as independent top-k heaps.
            q_s.offer(doc, s_score)
            q_f.offer(doc, f_score)
        if len(q_f) >= self.k:
            self.floor_s = q_s.lowest_key()
            self.floor_f = q_f.lowest_key()
            self.pivot_threshold = self.f_s * self.floor_s[0]
            self.thr_f = self.f_f * self.floor_f[0]

    def results(self):
        return self.state.q_f.ranked()


class _SingleController:
    def __init__(self, config, trace, factor):
        self.trace = trace
        self.queue = TopKQueue(config.k)
        self.gamma = config.beta
        self.factor = factor
        self.dual = False
        self.beta = config.beta
        self.pivot_weight = config.beta
        self.pivot_threshold = 0.0
        self.thr_f = 0.0

    def reason(self, bb, bl):
        return "s" if _mix(bb, bl, self.gamma) < self.pivot_threshold else None

    def insert(self, doc, sb, sl):
        q = self.queue
        if q.offer(doc, _mix(sb, sl, self.gamma)) != doc:
            self.pivot_threshold = self.factor * q.threshold

    def results(self):
        return self.queue.ranked()


_by_doc = attrgetter("doc")

# Pivot search runs on plain float prefix sums against a threshold shrunk by
# far more than their rounding error, so it can only pivot earlier (never
# skip a doc the exact fsum bound would keep).
_RELAX = 1.0 - 1e-9


def _traverse(cursors, ctl, trace, events):
    fsum = math.fsum
    mix = _mix
    n = len(cursors)
    w_s = ctl.pivot_weight
    w_f = ctl.beta
    dual = ctl.dual
    evaluated = skipped_s = skipped_f = violations = 0
    while True:
        cursors.sort(key=_by_doc)
        thr = ctl.pivot_threshold
        relaxed = thr * _RELAX
        acc_b = acc_l = 0.0
        p = -1
        for i in range(n):
            c = cursors[i]
            if c.doc >= END:
                break
            acc_b += c.ub_b
            acc_l += c.ub_l
            if w_s * acc_b + (1.0 - w_s) * acc_l >= relaxed:
                p = i
                break
        if p < 0:
            # Even the sum of every remaining list maximum misses F_s * Theta_s.
            if cursors[0].doc < END:
                skipped_s += 1
                if events is not None:
                    live = [c for c in cursors if c.doc < END]
                    events.append(SkipEvent(
                        cursors[0].doc, END, fsum(c.ub_b for c in live),
                        fsum(c.ub_l for c in live), thr, ctl.thr_f, "s",
                        tuple(sorted(c.slot for c in live))))
            break
        d = cursors[p].doc
        if events is not None and cursors[0].doc < d:
            events.append(SkipEvent(
                cursors[0].doc, d, fsum(c.ub_b for c in cursors[:p]),
                fsum(c.ub_l for c in cursors[:p]), thr, ctl.thr_f, "s",
                tuple(sorted(c.slot for c in cursors[:p]))))
        while p + 1 < n and cursors[p + 1].doc == d:
            p += 1
        head = cursors[:p + 1]

        bb = []
        bl = []
        for c in head:
            bi = c.bi
            if c.max_docs[bi] < d:
                bi = bisect_left(c.max_docs, d, bi + 1)
                if bi == c.n:
                    # Nothing >= d left in this list; everything before d is
                    # already covered by the pivot prefix bound.
                    c.exhaust()
                    continue
                c.bi = bi
            bb.append(c.max_b[bi])
            bl.append(c.max_l[bi])
        bound_b = fsum(bb)
        bound_l = fsum(bl)

        if mix(bound_b, bound_l, w_s) < thr:
            reason = "s"
            skipped_s += 1
        elif dual and mix(bound_b, bound_l, w_f) < ctl.thr_f:
            reason = "f"
            skipped_f += 1
        else:
            reason = None
        if reason is not None:
            nxt = END
            for c in head:
                if c.doc < END:
                    m = c.max_docs[c.bi] + 1
                    if m < nxt:
                        nxt = m
            if p + 1 < n and cursors[p + 1].doc < nxt:
                nxt = cursors[p + 1].doc
            if events is not None:
                events.append(SkipEvent(d, nxt, bound_b, bound_l, thr, ctl.thr_f, reason,
                                        tuple(sorted(c.slot for c in head if c.doc < END))))
            for c in head:
                c.skip_to(nxt)
            continue

        # Inline seek(d): the shallow move above already put every live
        # head cursor on the first block that can hold d.
        aligned = True
        for c in head:
            if c.real and c.doc == d:
                continue
            bi = c.bi
            if bi >= c.n:
                aligned = False
                continue
            if c.dbi != bi:
                c._load(bi)
                lo = 0
            else:
                lo = c.pos
            docs = c.docs
            pos = bisect_left(docs, d, lo)
            c.pos = pos
            c.doc = x = docs[pos]
            c.real = True
            if x != d:
                aligned = False
        if not aligned:
            continue

        if p:
            sb = fsum([c.wb[c.pos] for c in head])
            sl = fsum([c.wl[c.pos] for c in head])
        else:
            c = head[0]
            sb = c.wb[c.pos]
            sl = c.wl[c.pos]
        if sb > bound_b or sl > bound_l:
            violations += 1
        ctl.insert(d, sb, sl)
        evaluated += 1
        for c in head:
            pos = c.pos + 1
            if pos < len(c.docs):
                c.pos = pos
                c.doc = c.docs[pos]
            else:
                c.advance()
    trace.docs_evaluated += evaluated
    trace.skipped_by_s += skipped_s
    trace.skipped_by_f += skipped_f
    trace.bound_violations += violations


def _run(index, query, config, record_events):
    resolved, dropped = resolve_query(index, query)
    trace = QueryTrace(dropped_terms=dropped, events=[] if record_events else None)
    trace.blocks_total = sum(len(plist.blocks) for plist, _ in resolved)
    start = time.perf_counter()
    if config.algorithm == "exhaustive":
        results, trace.docs_evaluated = _exhaustive(index, resolved, config.k, config.beta)
        trace.blocks_loaded = trace.blocks_total
    else:
        if config.algorithm == "dths":
            ctl = _DualController(config, trace)
        else:
            factor = config.f_s if config.algorithm == "blockmax_overest" else 1.0
            ctl = _SingleController(config, trace, factor)
        cursors = [_Cursor(plist, weight, index.scale, trace, i) for i, (plist, weight) in enumerate(resolved)]
        if cursors:
            _traverse(cursors, ctl, trace, trace.events)
        results = ctl.results()
    trace.elapsed = time.perf_counter() - start
    trace.results = results
    return results, trace


def retrieve(index, query, config=None, record_events=False):
    """Run ``config.algorithm`` for one query; returns ``(results, trace)``.

    ``results`` is a list of ``(doc_id, score)`` ordered by score desc, doc
    id asc. With ``record_events`` the trace keeps a :class:`SkipEvent` for
    every skipped doc range so decisions can be replayed.
    """
    config = config or RetrievalConfig()
    if not isinstance(config, RetrievalConfig):
        raise ConfigError("config must be a RetrievalConfig")
    return _run(index, query, config, record_events)


def dths_traverse(index, query, config=None, record_events=False):
    config = config or RetrievalConfig()
    if config.algorithm != "dths":
        raise ConfigError(f"dths_traverse needs algorithm='dths', got {config.algorithm!r}")
    return _run(index, query, config, record_events)


def blockmax_traverse(index, query, k, beta=0.0, record_events=False):
    """Rank-safe block-max traversal on a single mixed channel."""
    config = RetrievalConfig(k=k, alpha=beta, beta=beta, algorithm="blockmax")
    return _run(index, query, config, record_events)


def overest_traverse(index, query, k, F, beta=0.0, record_events=False):
    """Block-max traversal skipping when bound < F * Theta (learned-only by default)."""
    config = RetrievalConfig(k=k, alpha=beta, beta=beta, f_s=F, algorithm="blockmax_overest")
    return _run(index, query, config, record_events)


def scores_of(index, query, doc_ids):
    """Exact per-channel scores of the given docs, as ScorePairs (diagnostics)."""
    resolved, _ = resolve_query(index, query)
    wanted = set(doc_ids)
    acc = {d: ([], []) for d in wanted}
    for plist, weight in resolved:
        factor = weight / index.scale
        for block in plist.blocks:
            for doc, qb, ql in block.records():
                if doc in wanted:
                    acc[doc][0].append(qb * factor)
                    acc[doc][1].append(ql * factor)
    return {d: ScorePair(math.fsum(b), math.fsum(l)) for d, (b, l) in acc.items()}
