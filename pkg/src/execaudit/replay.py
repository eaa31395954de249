"""Grouped re-execution with multivalues, simulate-and-check, and the audit.

Requests that share a control-flow tag are re-executed together.  A variable
holds either a plain scalar (univalue, one value for the whole group) or a
:class:`Multi` (one value per request).  Instructions whose operands are all
univalues run once; otherwise they run per request, and the result collapses
back to a univalue whenever the components agree.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .decision import AuditDecision, Reason, Reject
from .graph import process_op_reports
from .lang import (
    MAX_STEPS, Lit, Program, Trap, digest_branch, digest_start, eval_binop,
    is_zero, kv_key, make_query, query_value, register_object,
)
from .objects import (
    DB_ID, DB_OP, KV_GET, KV_ID, KV_SET, REG_PREFIX, REGISTER_READ,
    REGISTER_WRITE,
)
from .trace import Reports, Trace, check_balanced
from .values import canon, is_int, render
from .versioned import (
    build_db, build_kv, db_query, dedup_reads, kv_get, query_ts,
)

DEFAULT_GROUP_CAP = 3000
_NO_WRITE = object()


# --- multivalues -------------------------------------------------------------

class Multi:
    """Per-request values of one variable; never all equal once stored."""

    __slots__ = ("vals",)

    def __init__(self, vals):
        self.vals = tuple(vals)

    def __repr__(self):
        return f"Multi{self.vals!r}"


def uniform(vals) -> bool:
    v0 = vals[0]
    t = type(v0)
    for v in vals:
        if type(v) is not t or v != v0:
            return False
    return True


def collapse(vals):
    return vals[0] if uniform(vals) else Multi(vals)


def component(v, i: int):
    return v.vals[i] if isinstance(v, Multi) else v


# --- configuration, stats ----------------------------------------------------

@dataclass
class AuditConfig:
    dedup: bool = True
    group_cap: int = DEFAULT_GROUP_CAP
    parallel_groups: int = 1
    singleton_groups: bool = False  # re-execute every rid alone
    check_normalization: bool = False
    max_steps: int = MAX_STEPS


@dataclass
class GroupStats:
    tag: int
    size: int
    instructions: int = 0
    univalent: int = 0
    evals: int = 0
    db_reads: int = 0
    db_issued: int = 0
    tag_match: Optional[bool] = None

    @property
    def db_deduped(self) -> int:
        return self.db_reads - self.db_issued

    @property
    def univalent_fraction(self) -> float:
        return self.univalent / self.instructions if self.instructions else 1.0


@dataclass
class AuditTotals:
    groups: int = 0
    requests: int = 0
    instructions: int = 0
    univalent: int = 0
    evals: int = 0
    db_reads: int = 0
    db_issued: int = 0

    @classmethod
    def of(cls, stats) -> "AuditTotals":
        t = cls()
        for g in stats:
            t.groups += 1
            t.requests += g.size
            t.instructions += g.instructions
            t.univalent += g.univalent
            t.evals += g.evals
            t.db_reads += g.db_reads
            t.db_issued += g.db_issued
        return t

    @property
    def db_deduped(self) -> int:
        return self.db_reads - self.db_issued

    @property
    def univalent_fraction(self) -> float:
        return self.univalent / self.instructions if self.instructions else 1.0


def stats_lines(decision: AuditDecision) -> list:
    """``key=value`` records: one summary line, then one per group."""
    t = AuditTotals.of(decision.stats)
    head = (f"totals groups={t.groups} "
            f"requests={t.requests} instructions={t.instructions} evals={t.evals} "
            f"univalent_fraction={t.univalent_fraction:.4f} db_reads={t.db_reads} "
            f"db_issued={t.db_issued} db_deduped={t.db_deduped}")
    lines = [head]
    for g in decision.stats:
        lines.append(
            f"group tag={g.tag:016x} size={g.size} instructions={g.instructions} "
            f"evals={g.evals} univalent_fraction={g.univalent_fraction:.4f} "
            f"db_reads={g.db_reads} db_issued={g.db_issued} db_deduped={g.db_deduped} "
            f"tag_match={'-' if g.tag_match is None else str(g.tag_match).lower()}")
    return lines


# --- audit context -----------------------------------------------------------

def check_nondet(nondet: dict, rids=None) -> None:
    for rid in nondet:
        if rids is not None and rid not in rids:
            raise Reject(Reason.NONDET_MISMATCH, f"nondet values for unknown rid {rid}")
        last = None
        for idx, (builtin, v) in enumerate(nondet[rid], start=1):
            if builtin != "time" or not is_int(v):
                raise Reject(Reason.NONDET_MISMATCH, f"ND {rid}[{idx}] = ({builtin}, {v!r})")
            if last is not None and v < last:
                raise Reject(Reason.NONDET_NONMONOTONIC, f"ND {rid}[{idx}]: {v} < {last}")
            last = v


def _register_prev_writes(obj: str, log) -> list:
    """prev[s] = value of the latest write at seq < s (or _NO_WRITE)."""
    prev = [_NO_WRITE] * (len(log) + 2)
    last = _NO_WRITE
    for seq, e in enumerate(log, start=1):
        prev[seq] = last
        if e.optype == REGISTER_WRITE:
            if len(e.contents) != 1:
                raise Reject(Reason.MALFORMED_REPORT, f"{obj}[{seq}]: bad RegisterWrite")
            last = e.contents[0]
        elif e.optype == REGISTER_READ:
            if e.contents:
                raise Reject(Reason.MALFORMED_REPORT, f"{obj}[{seq}]: bad RegisterRead")
        else:
            raise Reject(Reason.MALFORMED_REPORT, f"{obj}[{seq}]: optype {e.optype}")
    prev[len(log) + 1] = last
    return prev


@dataclass
class AuditContext:
    """Everything re-execution reads; immutable once built."""

    program: Program
    trace: Trace
    reports: Reports
    requests: dict
    responses: dict
    arrival: dict
    opmap: dict
    graph: object
    vkv: object
    vdb: object
    dedup_index: object
    reg_prev: dict = field(default_factory=dict)


def prepare(program: Program, trace: Trace, reports: Reports) -> AuditContext:
    """Balance check, graph and log checks, nondet check, store builds."""
    msg = check_balanced(trace)
    if msg is not None:
        raise Reject(Reason.UNBALANCED, msg)
    graph, opmap = process_op_reports(trace, reports)
    requests = trace.requests()
    check_nondet(reports.nondet, requests)
    reg_prev = {}
    for obj, log in reports.logs.items():
        if obj.startswith(REG_PREFIX):
            reg_prev[obj] = _register_prev_writes(obj, log)
        elif obj not in (KV_ID, DB_ID):
            raise Reject(Reason.MALFORMED_REPORT, f"unknown object {obj!r}")
    vkv = build_kv(reports.logs.get(KV_ID, []))
    vdb, index = build_db(reports.logs.get(DB_ID, []))
    return AuditContext(program, trace, reports, requests, trace.responses(),
                        trace.arrival_order(), opmap, graph, vkv, vdb, index, reg_prev)


# --- check and simulate ------------------------------------------------------

def check_op(ctx: AuditContext, rid, opnum, obj, optype, contents) -> int:
    loc = ctx.opmap.get(rid, opnum)
    if loc is None:
        raise Reject(Reason.OP_NOT_IN_MAP, f"({rid}, {opnum})")
    logged_obj, s = loc
    e = ctx.reports.logs[logged_obj][s - 1]
    if logged_obj != obj or e.optype != optype or canon(e.contents) != canon(tuple(contents)):
        raise Reject(Reason.OP_MISMATCH,
                     f"({rid}, {opnum}): re-executed {optype} on {obj}, logged {e.optype} on {logged_obj}[{s}]")
    return s


def check_txn_query(ctx: AuditContext, rid, opnum, qnum, query) -> int:
    """Check one query of an in-progress transaction against the logged array."""
    loc = ctx.opmap.get(rid, opnum)
    if loc is None:
        raise Reject(Reason.OP_NOT_IN_MAP, f"({rid}, {opnum})")
    logged_obj, s = loc
    e = ctx.reports.logs[logged_obj][s - 1]
    if logged_obj != DB_ID or e.optype != DB_OP:
        raise Reject(Reason.OP_MISMATCH, f"({rid}, {opnum}): transaction logged as {e.optype} on {logged_obj}")
    if qnum > len(e.contents) or e.contents[qnum - 1] != query:
        raise Reject(Reason.OP_MISMATCH, f"({rid}, {opnum}) query {qnum} differs from log")
    return s


def sim_op(ctx: AuditContext, obj, s, optype, contents):
    """Result of a read at log position s, taken from the logged writes."""
    if optype == REGISTER_READ:
        v = ctx.reg_prev[obj][s]
        if v is _NO_WRITE:
            raise Reject(Reason.NO_PRIOR_WRITE, f"{obj}[{s}]")
        return v
    if optype == KV_GET:
        return kv_get(ctx.vkv, contents[0], s)
    if optype == DB_OP:
        return [db_query(ctx.vdb, q, query_ts(s, k)) for k, q in enumerate(contents, start=1)]
    return None


# --- grouped re-execution ----------------------------------------------------

class _GroupRun:
    def __init__(self, ctx: AuditContext, rids: list, handler: str, tag: int, config: AuditConfig):
        self.ctx = ctx
        self.rids = rids
        self.n = len(rids)
        self.config = config
        self.code = ctx.program.handlers[handler].code
        self.digest = digest_start(handler)
        self.vars: dict = {}
        self.outs: list = []
        self.opnum = 1
        self.nd_pos = [0] * self.n
        self.nd = [ctx.reports.nondet.get(r, []) for r in rids]
        self.stats = GroupStats(tag, self.n)

    def get(self, operand):
        if isinstance(operand, Lit):
            return operand.value
        try:
            return self.vars[operand.name]
        except KeyError:
            raise Trap(f"read of unset variable {operand.name!r}") from None

    def store(self, name, v):
        if self.config.check_normalization and isinstance(v, Multi):
            assert len(v.vals) == self.n, "multivalue width differs from group size"
            assert not uniform(v.vals), f"uncollapsed multivalue stored in {name}"
        self.vars[name] = v

    def lift(self, fn, *args):
        st = self.stats
        if not any(isinstance(a, Multi) for a in args):
            st.univalent += 1
            st.evals += 1
            return fn(*args)
        st.evals += self.n
        return collapse([fn(*(component(a, i) for a in args)) for i in range(self.n)])

    def per_rid(self, v, fn) -> list:
        return [fn(component(v, i)) for i in range(self.n)]

    def state_op(self, objs, optype, contents, is_read):
        ctx = self.ctx
        results = []
        for i, rid in enumerate(self.rids):
            s = check_op(ctx, rid, self.opnum, objs[i], optype, contents[i])
            if is_read:
                results.append(sim_op(ctx, objs[i], s, optype, contents[i]))
        self.stats.evals += self.n
        self.opnum += 1
        return collapse(results) if is_read else None

    def db(self, tmpl, txn):
        ctx = self.ctx
        st = self.stats
        st.evals += self.n
        vals = [self.get(o) for o in tmpl.operands()]
        if any(isinstance(v, Multi) for v in vals):
            queries = [make_query(tmpl, lambda o, i=i: component(self.get(o), i)) for i in range(self.n)]
        else:
            queries = [make_query(tmpl, self.get)] * self.n
        qnum = len(txn[0]) + 1
        batch = []
        for i, rid in enumerate(self.rids):
            txn[i].append(queries[i])
            s = check_txn_query(ctx, rid, self.opnum, qnum, queries[i])
            batch.append((queries[i], query_ts(s, qnum)))
        if not queries[0].is_read:
            return True
        reps = dedup_reads(batch, ctx.dedup_index) if self.config.dedup else list(range(self.n))
        rendered: dict = {}
        out = []
        for i, (q, ts) in enumerate(batch):
            st.db_reads += 1
            r = reps[i]
            if r not in rendered:
                st.db_issued += 1
                rendered[r] = query_value(q, db_query(ctx.vdb, q, ts))
            out.append(rendered[r])
        return collapse(out)

    def take_nondet(self, builtin):
        vals = []
        for i, rid in enumerate(self.rids):
            pos = self.nd_pos[i]
            if pos >= len(self.nd[i]):
                raise Reject(Reason.NONDET_MISMATCH, f"{rid}: {builtin} with no reported value")
            b, v = self.nd[i][pos]
            if b != builtin:
                raise Reject(Reason.NONDET_MISMATCH, f"{rid}: expected {builtin}, reported {b}")
            self.nd_pos[i] = pos + 1
            vals.append(v)
        self.stats.evals += self.n
        return collapse(vals)

    def run(self) -> dict:
        code = self.code
        st = self.stats
        ip = 0
        txn = None
        limit = self.config.max_steps
        while ip < len(code):
            if st.instructions >= limit:
                raise Trap("step limit exceeded")
            ins = code[ip]
            st.instructions += 1
            op, a = ins.op, ins.args
            nxt = ip + 1
            if op == "const":
                st.univalent += 1
                st.evals += 1
                self.store(a[0], a[1].value)
            elif op == "mov":
                v = self.get(a[1])
                if isinstance(v, Multi):
                    st.evals += self.n
                else:
                    st.univalent += 1
                    st.evals += 1
                self.store(a[0], v)
            elif op == "binop":
                self.store(a[0], self.lift(lambda x, y, f=a[1]: eval_binop(f, x, y),
                                           self.get(a[2]), self.get(a[3])))
            elif op == "jz":
                cond = self.lift(is_zero, self.get(a[0]))
                if isinstance(cond, Multi):
                    raise Reject(Reason.DIVERGENCE, f"branch at {ip} splits the group")
                self.digest = digest_branch(self.digest, ip, cond)
                if cond:
                    nxt = a[1]
            elif op == "jmp":
                st.univalent += 1
                st.evals += 1
                self.digest = digest_branch(self.digest, ip, True)
                nxt = a[0]
            elif op == "input":
                st.evals += self.n
                vals = []
                for rid in self.rids:
                    params = self.ctx.requests[rid].param_dict
                    if a[1] not in params:
                        raise Trap(f"missing request parameter {a[1]!r}")
                    vals.append(params[a[1]])
                self.store(a[0], collapse(vals))
            elif op == "output":
                v = self.get(a[0])
                if isinstance(v, Multi):
                    st.evals += self.n
                else:
                    st.univalent += 1
                    st.evals += 1
                self.outs.append(v)
            elif op == "time":
                self.store(a[0], self.take_nondet("time"))
            elif op == "halt":
                st.univalent += 1
                st.evals += 1
                break
            elif op == "regread":
                objs = self.per_rid(self.get(a[1]), register_object)
                self.store(a[0], self.state_op(objs, REGISTER_READ, [()] * self.n, True))
            elif op == "regwrite":
                name, val = self.get(a[0]), self.get(a[1])
                objs = self.per_rid(name, register_object)
                contents = [(component(val, i),) for i in range(self.n)]
                self.state_op(objs, REGISTER_WRITE, contents, False)
            elif op == "kvget":
                keys = self.per_rid(self.get(a[1]), kv_key)
                self.store(a[0], self.state_op([KV_ID] * self.n, KV_GET, [(k,) for k in keys], True))
            elif op == "kvset":
                keys = self.per_rid(self.get(a[0]), kv_key)
                val = self.get(a[1])
                contents = [(keys[i], component(val, i)) for i in range(self.n)]
                self.state_op([KV_ID] * self.n, KV_SET, contents, False)
            elif op == "begin_txn":
                st.univalent += 1
                st.evals += 1
                txn = [[] for _ in range(self.n)]
            elif op == "db":
                self.store(a[0], self.db(a[1], txn))
            elif op == "end_txn":
                self.state_op([DB_ID] * self.n, DB_OP, [tuple(q) for q in txn], False)
                txn = None
            else:
                raise Trap(f"unknown opcode {op}")
            ip = nxt
        return self.finish()

    def finish(self) -> dict:
        issued = self.opnum - 1
        counts = self.ctx.reports.counts
        for i, rid in enumerate(self.rids):
            m = counts.get(rid, 0)
            if issued < m:
                raise Reject(Reason.OP_COUNT_SHORTFALL, f"{rid} issued {issued} of M={m} ops")
            if self.nd_pos[i] < len(self.nd[i]):
                raise Reject(Reason.NONDET_MISMATCH,
                             f"{rid} consumed {self.nd_pos[i]} of {len(self.nd[i])} reported values")
        self.stats.tag_match = self.digest == self.stats.tag
        out = {}
        for i, rid in enumerate(self.rids):
            out[rid] = "".join(render(component(v, i)) for v in self.outs).encode("utf-8")
        return out


def reexec_group(ctx: AuditContext, rids: list, tag: int = 0, config: Optional[AuditConfig] = None):
    """Re-execute one group; returns (outputs by rid, GroupStats).  Raises Reject."""
    config = config or AuditConfig()
    handlers = {ctx.requests[r].handler for r in rids}
    if len(handlers) != 1:
        raise Reject(Reason.DIVERGENCE, f"group {tag:016x} mixes handlers {sorted(handlers)}")
    handler = handlers.pop()
    if handler not in ctx.program.handlers:
        raise Reject(Reason.TRAP, f"unknown handler {handler!r}")
    run = _GroupRun(ctx, rids, handler, tag, config)
    try:
        return run.run(), run.stats
    except Trap as e:
        raise Reject(Reason.TRAP, f"group {tag:016x}: {e}") from None


def plan_groups(ctx: AuditContext, config: AuditConfig) -> list:
    """(tag, rids) batches in a fixed order; rids ordered by arrival."""
    arrival = ctx.arrival
    batches = []
    for tag in sorted(ctx.reports.cf):
        members = ctx.reports.cf[tag]
        unknown = [r for r in members if r not in arrival]
        if unknown:
            raise Reject(Reason.OUTPUT_MISMATCH, f"group {tag:016x} names {unknown[0]}, absent from trace")
        rids = sorted(members, key=arrival.__getitem__)
        if config.singleton_groups:
            batches.extend((tag, [r]) for r in rids)
            continue
        cap = max(1, config.group_cap)
        for k in range(0, len(rids), cap):
            batches.append((tag, rids[k:k + cap]))
    return batches


def _run_batch(ctx, config, batch):
    tag, rids = batch
    try:
        out, stats = reexec_group(ctx, rids, tag, config)
        return out, stats, None
    except Reject as r:
        return None, None, r


def compare_outputs(ctx: AuditContext, outputs) -> None:
    """``outputs`` is one {rid: body} per batch; a rid re-executed in several
    batches must match the trace every time."""
    seen = set()
    for out in outputs:
        for rid, body in out.items():
            if body != ctx.responses[rid]:
                raise Reject(Reason.OUTPUT_MISMATCH, f"{rid}: re-executed output differs from response")
            seen.add(rid)
    for rid in ctx.responses:
        if rid not in seen:
            raise Reject(Reason.OUTPUT_MISMATCH, f"{rid} was not re-executed")


def ssco_audit(program: Program, trace: Trace, reports: Reports,
               config: Optional[AuditConfig] = None) -> AuditDecision:
    config = config or AuditConfig()
    stats: list = []
    try:
        ctx = prepare(program, trace, reports)
        batches = plan_groups(ctx, config)
        if config.parallel_groups > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=config.parallel_groups) as pool:
                results = list(pool.map(lambda b: _run_batch(ctx, config, b), batches))
        else:
            results = []
            for b in batches:
                results.append(_run_batch(ctx, config, b))
                if results[-1][2] is not None:
                    break
        outputs = []
        for out, st, err in results:
            if err is not None:
                raise err
            stats.append(st)
            outputs.append(out)
        compare_outputs(ctx, outputs)
    except Reject as r:
        return AuditDecision.from_reject(r, stats)
    return AuditDecision.accept(stats)
