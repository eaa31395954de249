"""Consistent-ordering checks over the trace and the operation logs.

Builds the event graph whose nodes are (rid, opnum) with opnum 0 for the
request's arrival and ``INF`` for its response, checks the logs against the
op counts (building OpMap on the way) and rejects if the graph has a cycle.

Nodes are stored as dense integers: request ``rid`` owns the ids
``base[rid] .. base[rid] + M(rid) + 1`` in program order.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .decision import Reason, Reject
from .trace import REQ, Reports, Trace

INF = math.inf


@dataclass
class TimeGraph:
    """Request-level graph materializing the trace's real-time order."""

    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def adjacency(self) -> dict:
        adj = {n: [] for n in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
        return adj


class PrecedenceGraph:
    def __init__(self):
        self.rids: list = []
        self.bases: list = []
        self.base: dict = {}
        self.count: dict = {}
        self.succ: list = []

    def add_request(self, rid, m: int) -> None:
        b = len(self.succ)
        self.rids.append(rid)
        self.bases.append(b)
        self.base[rid] = b
        self.count[rid] = m
        self.succ.extend([] for _ in range(m + 2))

    def node_id(self, rid, j) -> int:
        m = self.count[rid]
        if j == INF:
            return self.base[rid] + m + 1
        if not 0 <= j <= m:
            raise KeyError((rid, j))
        return self.base[rid] + j

    def node(self, v: int) -> tuple:
        i = bisect_right(self.bases, v) - 1
        rid = self.rids[i]
        j = v - self.bases[i]
        return (rid, INF if j == self.count[rid] + 1 else j)

    def add_edge(self, a, b) -> None:
        self.succ[self.node_id(*a)].append(self.node_id(*b))

    @property
    def nodes(self) -> list:
        return [self.node(v) for v in range(len(self.succ))]

    def __len__(self):
        return len(self.succ)

    def edge_count(self) -> int:
        return sum(len(s) for s in self.succ)

    def edges(self):
        node = self.node
        for v, s in enumerate(self.succ):
            a = node(v)
            for w in s:
                yield a, node(w)

    def find_cycle(self):
        """Iterative three-colour DFS; returns the (rid, j) nodes of a cycle or None."""
        succ = self.succ
        color = bytearray(len(succ))
        for root in range(len(succ)):
            if color[root]:
                continue
            color[root] = 1
            stack = [root]
            pos = [0]
            while stack:
                v = stack[-1]
                k = pos[-1]
                s = succ[v]
                if k < len(s):
                    pos[-1] = k + 1
                    w = s[k]
                    c = color[w]
                    if c == 0:
                        color[w] = 1
                        stack.append(w)
                        pos.append(0)
                    elif c == 1:
                        cyc = stack[stack.index(w):] + [w]
                        return [self.node(x) for x in cyc]
                else:
                    color[v] = 2
                    stack.pop()
                    pos.pop()
        return None


class OpMap:
    """(rid, opnum) -> (object id, log sequence number)."""

    def __init__(self, graph: PrecedenceGraph):
        self.graph = graph
        self.loc: list = [None] * len(graph)

    def get(self, rid, opnum):
        g = self.graph
        m = g.count.get(rid)
        if m is None or not 1 <= opnum <= m:
            return None
        return self.loc[g.base[rid] + opnum]

    def __contains__(self, key) -> bool:
        return self.get(*key) is not None

    def __len__(self):
        return sum(1 for x in self.loc if x is not None)

    def items(self):
        g = self.graph
        for v, x in enumerate(self.loc):
            if x is not None:
                yield g.node(v), x


def create_time_precedence_graph(trace: Trace) -> TimeGraph:
    """Streaming construction: a new request descends from every member of the
    frontier (latest mutually concurrent requests); a response evicts the
    responder's parents from the frontier and joins it."""
    g = TimeGraph()
    frontier: dict = {}
    parents: dict = {}
    for e in trace.events:
        if e.kind == REQ:
            g.nodes.append(e.rid)
            ps = list(frontier)
            parents[e.rid] = ps
            g.edges.extend((p, e.rid) for p in ps)
        else:
            for p in parents[e.rid]:
                frontier.pop(p, None)
            frontier[e.rid] = None
    return g


def split_nodes(gtr: TimeGraph, counts: dict) -> PrecedenceGraph:
    """Nodes (rid, 0..M(rid)) and (rid, INF); each time edge a -> b becomes
    (a, INF) -> (b, 0)."""
    g = PrecedenceGraph()
    for rid in gtr.nodes:
        m = counts.get(rid, 0)
        if not isinstance(m, int) or m < 0:
            raise Reject(Reason.BAD_OP_COUNT, f"M({rid}) = {m!r}")
        g.add_request(rid, m)
    base, count, succ = g.base, g.count, g.succ
    for a, b in gtr.edges:
        succ[base[a] + count[a] + 1].append(base[b])
    return g


def add_program_edges(g: PrecedenceGraph) -> None:
    succ = g.succ
    for rid in g.rids:
        b = g.base[rid]
        for v in range(b, b + g.count[rid] + 1):
            succ[v].append(v + 1)


def check_logs(g: PrecedenceGraph, reports: Reports) -> OpMap:
    """Validate log entries against the trace and M; returns OpMap."""
    opmap = OpMap(g)
    loc = opmap.loc
    base, count = g.base, g.count
    for obj in sorted(reports.logs):
        for seq, e in enumerate(reports.logs[obj], start=1):
            b = base.get(e.rid)
            if b is None:
                raise Reject(Reason.LOG_UNKNOWN_RID, f"{obj}[{seq}] names {e.rid}")
            j = e.opnum
            if type(j) is not int or j <= 0 or j > count[e.rid]:
                raise Reject(Reason.LOG_OPNUM_RANGE, f"{obj}[{seq}] = ({e.rid}, {j})")
            if loc[b + j] is not None:
                raise Reject(Reason.LOG_DUPLICATE_OP, f"({e.rid}, {j}) logged twice")
            loc[b + j] = (obj, seq)
    for rid in g.rids:
        b = base[rid]
        for j in range(1, count[rid] + 1):
            if loc[b + j] is None:
                raise Reject(Reason.LOG_MISSING_OP, f"({rid}, {j}) absent from logs")
    return opmap


def add_state_edges(g: PrecedenceGraph, reports: Reports) -> None:
    base, succ = g.base, g.succ
    for obj in sorted(reports.logs):
        log = reports.logs[obj]
        for j in range(1, len(log)):
            prev, cur = log[j - 1], log[j]
            if prev.rid != cur.rid:
                succ[base[prev.rid] + prev.opnum].append(base[cur.rid] + cur.opnum)
            elif prev.opnum > cur.opnum:
                raise Reject(Reason.LOG_OPNUM_ORDER,
                             f"{obj}[{j + 1}]: {cur.rid} opnum {cur.opnum} after {prev.opnum}")


def process_op_reports(trace: Trace, reports: Reports):
    """Returns (graph, opmap); raises Reject.  The trace must be balanced."""
    gtr = create_time_precedence_graph(trace)
    g = split_nodes(gtr, reports.counts)
    add_program_edges(g)
    opmap = check_logs(g, reports)
    add_state_edges(g, reports)
    cycle = g.find_cycle()
    if cycle is not None:
        shown = " -> ".join(f"({r},{'inf' if j == INF else j})" for r, j in cycle[:8])
        raise Reject(Reason.CYCLE, shown + (" ..." if len(cycle) > 8 else ""))
    return g, opmap
