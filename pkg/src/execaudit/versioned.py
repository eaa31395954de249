"""Audit-time stores rebuilt from the operation logs.

The kv store keeps, per key, the history of (seq, value) writes.  The table
store keeps row versions stamped with query timestamps ``ts = s * MAXQ + q``
(transaction at log position ``s``, query ``q`` within it, 1-based); a
version is visible at ``ts`` when ``start_ts <= ts < end_ts``.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .decision import Reason, Reject
from .objects import DB_OP, KV_GET, KV_SET, Query, freeze_row, row_matches

MAXQ = 10000


def query_ts(s: int, qnum: int) -> int:
    return s * MAXQ + qnum


@dataclass
class VersionedKv:
    seqs: dict = field(default_factory=dict)    # key -> ascending seqs
    values: dict = field(default_factory=dict)  # key -> values, parallel to seqs


def build_kv(log) -> VersionedKv:
    store = VersionedKv()
    for seq, e in enumerate(log, start=1):
        c = e.contents
        if e.optype == KV_SET:
            if len(c) != 2 or not isinstance(c[0], str):
                raise Reject(Reason.MALFORMED_REPORT, f"kv[{seq}]: bad KvSet contents")
            store.seqs.setdefault(c[0], []).append(seq)
            store.values.setdefault(c[0], []).append(c[1])
        elif e.optype == KV_GET:
            if len(c) != 1 or not isinstance(c[0], str):
                raise Reject(Reason.MALFORMED_REPORT, f"kv[{seq}]: bad KvGet contents")
        else:
            raise Reject(Reason.MALFORMED_REPORT, f"kv[{seq}]: optype {e.optype}")
    return store


def kv_get(store: VersionedKv, key: str, s: int):
    """Value of the latest write to ``key`` with seq < s, or ABSENT."""
    seqs = store.seqs.get(key)
    if not seqs:
        return None
    i = bisect_left(seqs, s)
    return store.values[key][i - 1] if i else None


class RowVersions:
    """Versions of one (table, pk); intervals never overlap."""

    __slots__ = ("starts", "ends", "cols")

    def __init__(self):
        self.starts: list = []
        self.ends: list = []
        self.cols: list = []

    def current(self):
        if self.ends and self.ends[-1] == math.inf:
            return self.cols[-1]
        return None

    def close(self, ts):
        if self.ends and self.ends[-1] == math.inf:
            self.ends[-1] = ts

    def open(self, ts, cols: dict):
        self.starts.append(ts)
        self.ends.append(math.inf)
        self.cols.append(cols)

    def at(self, ts):
        i = bisect_right(self.starts, ts) - 1
        if i >= 0 and ts < self.ends[i]:
            return self.cols[i]
        return None

    def intervals(self):
        return list(zip(self.starts, self.ends))


@dataclass
class VersionedTableStore:
    tables: dict = field(default_factory=dict)  # table -> {pk: RowVersions}

    def dump(self) -> str:
        lines = []
        for t in sorted(self.tables):
            for pk in sorted(self.tables[t]):
                rv = self.tables[t][pk]
                for s, e, c in zip(rv.starts, rv.ends, rv.cols):
                    lines.append(f"{t} {pk} [{s}, {e}) {sorted(c.items())}")
        return "\n".join(lines)


@dataclass
class DedupIndex:
    writes: dict = field(default_factory=dict)  # table -> ascending write ts

    def writes_between(self, table: str, lo: int, hi: int) -> bool:
        """Any write to ``table`` with lo < ts <= hi?"""
        ts = self.writes.get(table)
        if not ts:
            return False
        return bisect_right(ts, hi) > bisect_right(ts, lo)


def _apply_write(store: VersionedTableStore, q: Query, ts: int):
    rows = store.tables.setdefault(q.table, {})
    rv = rows.get(q.pk)
    if q.kind == "insert":
        if rv is None:
            rv = rows[q.pk] = RowVersions()
        rv.close(ts)
        rv.open(ts, dict(q.row))
    elif q.kind == "update":
        cur = rv.current() if rv is not None else None
        if cur is not None:
            new = dict(cur)
            new[q.col] = q.val
            rv.close(ts)
            rv.open(ts, new)
    elif rv is not None:
        rv.close(ts)


def build_db(log):
    """Redo pass over the db log; returns (VersionedTableStore, DedupIndex)."""
    store = VersionedTableStore()
    index = DedupIndex()
    for s, e in enumerate(log, start=1):
        if e.optype != DB_OP or not all(isinstance(q, Query) for q in e.contents):
            raise Reject(Reason.MALFORMED_REPORT, f"db[{s}]: not a query array")
        if len(e.contents) >= MAXQ:
            raise Reject(Reason.MALFORMED_REPORT, f"db[{s}]: {len(e.contents)} queries >= MAXQ")
        for q, query in enumerate(e.contents, start=1):
            if query.is_read:
                continue
            ts = query_ts(s, q)
            _apply_write(store, query, ts)
            index.writes.setdefault(query.table, []).append(ts)
    return store, index


def db_query(store: VersionedTableStore, q: Query, ts: int):
    """Rows a select sees at ``ts`` (sorted by pk); None for writes.  ``ts``
    is a read's own slot, so no write carries the same timestamp."""
    if not q.is_read:
        return None
    rows = store.tables.get(q.table)
    if not rows:
        return ()
    out = []
    for pk in sorted(rows):
        cols = rows[pk].at(ts)
        if cols is not None and row_matches(pk, cols, q):
            out.append(freeze_row(pk, cols))
    return tuple(out)


def dedup_reads(queries, index: DedupIndex) -> list:
    """For each (query, ts) return the position of the query whose result it
    may reuse (itself when it must be issued).  Only lexically identical reads
    with no write to their table strictly after the earlier and at or before
    the later timestamp are merged."""
    reps = list(range(len(queries)))
    clusters: dict = {}
    for i, (q, ts) in enumerate(queries):
        if q.is_read:
            clusters.setdefault(q.text, []).append(i)
    for members in clusters.values():
        members.sort(key=lambda i: queries[i][1])
        for a, b in zip(members, members[1:]):
            qa, ta = queries[a]
            tb = queries[b][1]
            if not index.writes_between(qa.table, ta, tb):
                reps[b] = reps[a]
    return reps
