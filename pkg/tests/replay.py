"""Independent replay of recorded skip events against brute-force scores."""

import math
from bisect import bisect_left

from dualskip.retrieval import resolve_query
from dualskip.scoring import _mix


def channel_tables(index, query):
    """Per resolved query list: doc -> (bm25, learned) contribution."""
    resolved, _ = resolve_query(index, query)
    tables = []
    for plist, weight in resolved:
        factor = weight / index.scale
        tables.append({r.doc_id: (r.w_bm25 * factor, r.w_learned * factor) for r in plist.records()})
    return tables


def replay(index, query, trace, config):
    """Return (decision_errors, bound_violations, covered_docs) for one traced query."""
    tables = channel_tables(index, query)
    docs = sorted(set().union(*tables)) if tables else []
    w_s = config.alpha if config.algorithm == "dths" else config.beta
    decision_errors = 0
    violations = 0
    covered = set()
    for ev in trace.events:
        if ev.reason == "s":
            ok = _mix(ev.bound_bm25, ev.bound_learned, w_s) < ev.threshold_s
        else:
            ok = _mix(ev.bound_bm25, ev.bound_learned, config.beta) < ev.threshold_f
        decision_errors += not ok
        for x in docs[bisect_left(docs, ev.lo):bisect_left(docs, ev.hi)]:
            parts = [tables[i][x] for i in ev.lists if x in tables[i]]
            if math.fsum(p[0] for p in parts) > ev.bound_bm25 or math.fsum(p[1] for p in parts) > ev.bound_learned:
                violations += 1
            covered.add(x)
    return decision_errors, violations, covered
