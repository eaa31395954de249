"""Slow reference implementations used to test the auditor.

* one-request-at-a-time re-execution driven by an op schedule, with the
  same checks as the grouped auditor (``ooo_exec`` / ``ooo_audit``);
* op schedule construction (seeded topological sorts and random
  program-order interleavings);
* brute-force real-time order, reachability and transitive reduction;
* snapshot-replay answers for the versioned stores;
* exhaustive search for a schedule that explains a trace.
"""

from __future__ import annotations

import copy
import random
from typing import Optional

from .decision import AuditDecision, Reason, Reject
from .executor import OnlineState
from .graph import INF, PrecedenceGraph
from .lang import Output, Program, StateOp, Thread, Trap, run_to_next_event
from .objects import DB_ID, DB_OP, KV_GET, KV_SET, READ_OPTYPES, KvStoreObject, TableStoreObject
from .replay import check_op, check_txn_query, prepare, sim_op
from .trace import REQ, RESP, Reports, Trace, check_balanced
from .versioned import db_query, query_ts

VALID = "VALID"
INVALID = "INVALID"
MAX_VALIDITY_REQUESTS = 4
DEFAULT_VISIT_BUDGET = 500_000


class InstanceTooLarge(ValueError):
    pass


# --- one request at a time ----------------------------------------------------

class CheckingBackend:
    """State backend whose reads come from the logs and whose ops are checked."""

    def __init__(self, ctx):
        self.ctx = ctx

    def state_op(self, t, obj, optype, contents):
        s = check_op(self.ctx, t.rid, t.opnum, obj, optype, contents)
        if optype in READ_OPTYPES:
            return sim_op(self.ctx, obj, s, optype, contents)
        return None

    def begin_txn(self, t):
        pass

    def db_query(self, t, qnum, query):
        s = check_txn_query(self.ctx, t.rid, t.opnum, qnum, query)
        return db_query(self.ctx.vdb, query, query_ts(s, qnum))

    def end_txn(self, t, queries):
        check_op(self.ctx, t.rid, t.opnum, DB_ID, DB_OP, tuple(queries))


class ReplayNondet:
    """Hands out each rid's reported values in order."""

    def __init__(self, nondet: dict, exhausted=None):
        self.nondet = nondet
        self.exhausted = exhausted or (lambda rid: Reject(Reason.NONDET_MISMATCH,
                                                          f"{rid}: time with no reported value"))

    def time(self, t):
        nd = self.nondet.get(t.rid, [])
        if t.nd_used >= len(nd) or nd[t.nd_used][0] != "time":
            raise self.exhausted(t.rid)
        return nd[t.nd_used][1]


def ooo_exec(ctx, schedule) -> AuditDecision:
    """Execute requests one op at a time in the order of ``schedule``, a list
    of (rid, j) nodes: j = 0 starts the request, j = INF runs it to its
    response, other j run it to its j-th state operation."""
    backend = CheckingBackend(ctx)
    nondet = ReplayNondet(ctx.reports.nondet)
    threads: dict = {}
    produced: dict = {}
    try:
        for rid, j in schedule:
            if j == 0:
                req = ctx.requests[rid]
                threads[rid] = Thread(ctx.program, rid, req.handler, req.param_dict)
                continue
            t = threads[rid]
            ev = run_to_next_event(t, backend, nondet)
            if j == INF:
                if not isinstance(ev, Output):
                    raise Reject(Reason.OP_NOT_IN_MAP, f"({rid}, {t.opnum - 1}) after M")
                produced[rid] = ev.body
            elif not isinstance(ev, StateOp):
                raise Reject(Reason.OP_COUNT_SHORTFALL, f"{rid} halted before op {j}")
        for rid, t in threads.items():
            if t.nd_used < len(ctx.reports.nondet.get(rid, [])):
                raise Reject(Reason.NONDET_MISMATCH, f"{rid} left reported values unconsumed")
        for rid, body in ctx.responses.items():
            if produced.get(rid) != body:
                raise Reject(Reason.OUTPUT_MISMATCH, f"{rid}: re-executed output differs from response")
    except Reject as r:
        return AuditDecision.from_reject(r)
    except Trap as e:
        return AuditDecision.reject(Reason.TRAP, str(e))
    return AuditDecision.accept()


def ooo_audit(program: Program, trace: Trace, reports: Reports,
              seed: int = 0, interleave: bool = False) -> AuditDecision:
    """Reference audit: same preparation as the grouped audit, then
    ``ooo_exec`` under a seeded well-formed schedule."""
    try:
        ctx = prepare(program, trace, reports)
    except Reject as r:
        return AuditDecision.from_reject(r)
    sched = (random_wellformed_schedule(ctx.graph, seed) if interleave
             else topo_schedule(ctx.graph, seed))
    return ooo_exec(ctx, sched)


# --- op schedules ---------------------------------------------------------------

def topo_schedule(graph: PrecedenceGraph, seed: int = 0) -> list:
    """Seeded random topological order of all nodes."""
    rng = random.Random(seed)
    succ = graph.succ
    indeg = [0] * len(succ)
    for s in succ:
        for w in s:
            indeg[w] += 1
    ready = [v for v, d in enumerate(indeg) if d == 0]
    order = []
    while ready:
        k = rng.randrange(len(ready))
        ready[k], ready[-1] = ready[-1], ready[k]
        v = ready.pop()
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    if len(order) != len(succ):
        raise ValueError("graph has a cycle")
    return [graph.node(v) for v in order]


def _chains(nodes) -> dict:
    chains: dict = {}
    for rid, j in nodes:
        chains.setdefault(rid, []).append(j)
    for js in chains.values():
        js.sort()
    return chains


def random_wellformed_schedule(graph: PrecedenceGraph, seed: int = 0) -> list:
    """Random interleaving that keeps each request's nodes in program order
    but may ignore edges between requests."""
    rng = random.Random(seed)
    chains = _chains(graph.nodes)
    pos = {rid: 0 for rid in chains}
    live = sorted(chains)
    order = []
    while live:
        rid = live[rng.randrange(len(live))]
        order.append((rid, chains[rid][pos[rid]]))
        pos[rid] += 1
        if pos[rid] == len(chains[rid]):
            live.remove(rid)
    return order


def is_wellformed(schedule, graph: PrecedenceGraph) -> bool:
    nodes = set(graph.nodes)
    if len(schedule) != len(nodes) or set(schedule) != nodes:
        return False
    last: dict = {}
    for rid, j in schedule:
        if rid in last and last[rid] >= j:
            return False
        last[rid] = j
    return True


def respects_edges(schedule, graph: PrecedenceGraph) -> bool:
    where = {n: i for i, n in enumerate(schedule)}
    return all(where[a] < where[b] for a, b in graph.edges())


# --- brute-force relations --------------------------------------------------------

def trace_order(trace: Trace) -> set:
    """<_Tr: (r1, r2) whenever r1's response precedes r2's request."""
    rel = set()
    ev = trace.events
    for i, e in enumerate(ev):
        if e.kind != RESP:
            continue
        for f in ev[i + 1:]:
            if f.kind == REQ:
                rel.add((e.rid, f.rid))
    return rel


def reachability(nodes, edges) -> set:
    adj = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
    rel = set()
    for src in adj:
        stack = list(adj[src])
        seen = set()
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            rel.add((src, n))
            stack.extend(adj[n])
    return rel


def transitive_reduction(relation) -> set:
    """Edges (a, c) of a strict partial order with no b such that a < b < c."""
    rel = set(relation)
    elems = {x for pair in rel for x in pair}
    return {(a, c) for a, c in rel
            if not any((a, b) in rel and (b, c) in rel for b in elems)}


# --- snapshot-replay store answers ----------------------------------------------

def snapshot_kv_get(log, key: str, s: int):
    kv = KvStoreObject()
    for e in log[:s - 1]:
        if e.optype == KV_SET:
            kv.apply(KV_SET, e.contents)
    return kv.apply(KV_GET, (key,))


def snapshot_db_query(log, query, s: int, qnum: int):
    db = TableStoreObject()
    for e in log[:s - 1]:
        db.apply(DB_OP, e.contents)
    if s - 1 < len(log):
        for q in log[s - 1].contents[:qnum - 1]:
            db.execute(q)
    return db.execute(query)


# --- exhaustive validity ------------------------------------------------------------

class _Exhausted(Exception):
    pass


def exhaustive_validity(program: Program, trace: Trace, reports: Optional[Reports] = None,
                        max_requests: int = MAX_VALIDITY_REQUESTS,
                        budget: int = DEFAULT_VISIT_BUDGET) -> str:
    """VALID iff some schedule that honours real-time order makes every
    request produce exactly its traced response.  ``time`` values come from
    the reports, positionally per rid."""
    if check_balanced(trace) is not None:
        return INVALID
    reqs = trace.requests()
    if len(reqs) > max_requests:
        raise InstanceTooLarge(f"{len(reqs)} requests > {max_requests}")
    responses = trace.responses()
    before = trace_order(trace)
    preds = {r: {a for a, b in before if b == r} for r in reqs}
    rids = sorted(reqs, key=trace.arrival_order().__getitem__)
    nondet = ReplayNondet((reports.nondet if reports else {}), lambda rid: _Exhausted(rid))
    for r in rids:
        if reqs[r].handler not in program.handlers:
            return INVALID

    visited = set()
    visits = 0
    keep = {id(program): program}

    def key(threads, state):
        return (tuple(threads[r].state_key() if r in threads else None for r in rids),
                state.snapshot())

    def search(threads, state) -> bool:
        nonlocal visits
        if all(r in threads and threads[r].halted for r in rids):
            return True
        k = key(threads, state)
        if k in visited:
            return False
        visited.add(k)
        visits += 1
        if visits > budget:
            raise InstanceTooLarge(f"more than {budget} states")
        for r in rids:
            t = threads.get(r)
            if t is not None and t.halted:
                continue
            if t is None and not all(p in threads and threads[p].halted for p in preds[r]):
                continue
            th2 = copy.deepcopy(threads, dict(keep))
            st2 = copy.deepcopy(state)
            try:
                if r not in th2:
                    req = reqs[r]
                    th2[r] = Thread(program, r, req.handler, req.param_dict)
                ev = run_to_next_event(th2[r], st2, nondet)
            except (Trap, _Exhausted):
                continue
            if isinstance(ev, Output) and ev.body != responses[r]:
                continue
            if search(th2, st2):
                return True
        return False

    return VALID if search({}, OnlineState()) else INVALID
