"""Mutations that simulate a misbehaving executor.

Only response bodies in the trace may change: the collector is trusted, so
request events and event order are left alone.  Everything else touched is
in the reports.
"""

from __future__ import annotations

import random
from dataclasses import replace
from typing import Optional

from .objects import DB_OP, KV_SET, REGISTER_WRITE, Query
from .trace import RESP, OpLogEntry, Reports, Trace, rid_sort_key
from .values import is_int

MUTATIONS = (
    "flip-response-byte",
    "drop-log-entry",
    "insert-spurious-op",
    "swap-log-entries",
    "rewrite-write-value",
    "inflate-M",
    "deflate-M",
    "move-rid-across-cf-groups",
    "perturb-nondet-time",
)


class TamperError(ValueError):
    """The mutation does not apply to this trace/reports pair."""


def perturb(v):
    if isinstance(v, bool):
        return not v
    if is_int(v):
        return v + 1
    if isinstance(v, str):
        return v + "x"
    return 0


def _perturb_query(q: Query) -> Query:
    if q.kind == "insert" and q.row:
        col, v = q.row[0]
        return replace(q, row=((col, perturb(v)),) + q.row[1:])
    if q.kind == "update":
        return replace(q, val=perturb(q.val))
    return replace(q, pk=q.pk + 1)


def _choose(rng: random.Random, items: list, what: str):
    if not items:
        raise TamperError(f"nothing to mutate: {what}")
    return items[rng.randrange(len(items))]


def _flip(trace, reports, rng, target, mask=0x01):
    cands = [i for i, e in enumerate(trace.events)
             if e.kind == RESP and e.body and (target is None or e.rid == target)]
    i = _choose(rng, cands, "no non-empty response")
    e = trace.events[i]
    off = rng.randrange(len(e.body))
    body = bytearray(e.body)
    body[off] ^= mask
    trace.events[i] = replace(e, body=bytes(body))


def _drop(trace, reports, rng, target):
    objs = sorted(o for o, log in reports.logs.items() if log)
    obj = _choose(rng, objs, "all logs empty")
    log = reports.logs[obj]
    del log[rng.randrange(len(log))]


def _insert(trace, reports, rng, target):
    objs = sorted(o for o, log in reports.logs.items() if log)
    obj = _choose(rng, objs, "all logs empty")
    log = reports.logs[obj]
    template = log[rng.randrange(len(log))]
    rids = sorted(trace.requests(), key=rid_sort_key)
    rid = target if target is not None else _choose(rng, rids, "empty trace")
    m = reports.counts.get(rid, 0)
    if rng.random() < 0.5:
        opnum = m + 1
        reports.counts[rid] = m + 1
    else:
        opnum = rng.randint(1, m + 1)
    entry = OpLogEntry(rid, opnum, template.optype, template.contents)
    log.insert(rng.randint(0, len(log)), entry)


def _swap(trace, reports, rng, target):
    pairs = []
    for obj in sorted(reports.logs):
        log = reports.logs[obj]
        for i in range(len(log)):
            for j in range(i + 1, len(log)):
                if log[i].rid != log[j].rid:
                    pairs.append((obj, i, j))
    obj, i, j = _choose(rng, pairs, "no two entries from different rids in one log")
    log = reports.logs[obj]
    log[i], log[j] = log[j], log[i]


def _is_write(e: OpLogEntry) -> bool:
    if e.optype in (REGISTER_WRITE, KV_SET):
        return True
    return e.optype == DB_OP and any(isinstance(q, Query) and not q.is_read for q in e.contents)


def _rewrite(trace, reports, rng, target):
    cands = [(obj, i) for obj in sorted(reports.logs)
             for i, e in enumerate(reports.logs[obj])
             if _is_write(e) and (target is None or e.rid == target)]
    obj, i = _choose(rng, cands, "no write operations")
    e = reports.logs[obj][i]
    c = list(e.contents)
    if e.optype == REGISTER_WRITE:
        c[0] = perturb(c[0])
    elif e.optype == KV_SET:
        c[1] = perturb(c[1])
    else:
        k = _choose(rng, [k for k, q in enumerate(c) if not q.is_read], "no write query")
        c[k] = _perturb_query(c[k])
    reports.logs[obj][i] = replace(e, contents=tuple(c))


def _inflate(trace, reports, rng, target):
    rid = target if target is not None else _choose(
        rng, sorted(reports.counts, key=rid_sort_key), "no op counts")
    reports.counts[rid] = reports.counts.get(rid, 0) + 1


def _deflate(trace, reports, rng, target):
    cands = [r for r in sorted(reports.counts, key=rid_sort_key)
             if reports.counts[r] > 0 and (target is None or r == target)]
    rid = _choose(rng, cands, "no positive op count")
    reports.counts[rid] -= 1


def _move(trace, reports, rng, target):
    tags = sorted(reports.cf)
    if len(tags) < 2:
        raise TamperError("nothing to mutate: fewer than two control-flow groups")
    moves = [(t, rid) for t in tags for rid in sorted(reports.cf[t], key=rid_sort_key)
             if target is None or rid == target]
    src, rid = _choose(rng, moves, "rid not in any group")
    dst = _choose(rng, [t for t in tags if t != src], "single group")
    reports.cf[src].discard(rid)
    reports.cf[dst].add(rid)
    if not reports.cf[src]:
        del reports.cf[src]


def _perturb_time(trace, reports, rng, target):
    times = {rid: [i for i, (b, v) in enumerate(nd) if b == "time" and is_int(v)]
             for rid, nd in reports.nondet.items() if target is None or rid == target}
    multi = sorted((r for r, ix in times.items() if len(ix) >= 2), key=rid_sort_key)
    if multi:
        rid = _choose(rng, multi, "")
        idx = times[rid]
        k = rng.randrange(1, len(idx))
        prev = reports.nondet[rid][idx[k - 1]][1]
        reports.nondet[rid][idx[k]] = ("time", prev - 1)
        return
    single = sorted((r for r, ix in times.items() if ix), key=rid_sort_key)
    rid = _choose(rng, single, "no time values")
    i = times[rid][0]
    reports.nondet[rid][i] = ("time", reports.nondet[rid][i][1] + 1)


_IMPL = {
    "flip-response-byte": _flip,
    "drop-log-entry": _drop,
    "insert-spurious-op": _insert,
    "swap-log-entries": _swap,
    "rewrite-write-value": _rewrite,
    "inflate-M": _inflate,
    "deflate-M": _deflate,
    "move-rid-across-cf-groups": _move,
    "perturb-nondet-time": _perturb_time,
}


def tamper(trace: Trace, reports: Reports, mutation: str, seed: int = 0,
           target: Optional[str] = None):
    """Return mutated copies of (trace, reports).  ``target`` pins the rid
    where the mutation is rid-specific."""
    if mutation not in _IMPL:
        raise TamperError(f"unknown mutation {mutation!r}")
    t2 = Trace(list(trace.events))
    r2 = reports.copy()
    _IMPL[mutation](t2, r2, random.Random(seed), target)
    return t2, r2
