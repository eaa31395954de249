"""Simulated concurrent server.

Requests run as logical threads interleaved by an explicit schedule (a list
of rids, repeats allowed).  The first occurrence of a rid is its arrival;
each later occurrence runs that thread to its next state operation or to its
response.  Everything is single threaded and deterministic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .lang import Output, Program, Thread, Trap, run_to_next_event
from .objects import DB_ID, DB_OP, fresh_object
from .trace import OpLogEntry, Reports, Trace, request, response

WELL_BEHAVED = "well-behaved"
TAMPERED = "tampered"


class ScheduleError(ValueError):
    pass


class ExecutionFault(RuntimeError):
    """A request trapped while being served."""


@dataclass(frozen=True)
class Arrival:
    rid: str
    handler: str
    params: tuple = ()
    epoch: int = 0

    @property
    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass
class Workload:
    """Arrivals in order, plus either an explicit schedule or the knobs for a
    seeded random one.  Requests of epoch e+1 only arrive once every request
    of earlier epochs has responded."""

    arrivals: list = field(default_factory=list)
    schedule: Optional[list] = None
    seed: int = 0
    concurrency: int = 1
    arrive_prob: float = 0.5


@dataclass
class ExecutorConfig:
    mode: str = WELL_BEHAVED
    mutation: Optional[str] = None
    time_base: int = 1_700_000_000
    time_step: int = 1
    seed: int = 0


class OnlineState:
    """State backend for online execution: applies operations to the shared
    objects and appends them to the per-object operation logs."""

    def __init__(self):
        self.objects: dict = {}
        self.logs: dict[str, list] = {}
        self._txn: Optional[list] = None

    def obj(self, obj_id: str):
        if obj_id not in self.objects:
            self.objects[obj_id] = fresh_object(obj_id)
        return self.objects[obj_id]

    def _log(self, obj_id: str, entry: OpLogEntry):
        log = self.logs.setdefault(obj_id, [])
        log.append(entry)
        assert len(log) == self.objects[obj_id].seq

    def state_op(self, thread, obj, optype, contents):
        result = self.obj(obj).apply(optype, contents)
        self._log(obj, OpLogEntry(thread.rid, thread.opnum, optype, contents))
        return result

    def begin_txn(self, thread):
        self.obj(DB_ID)
        self._txn = []

    def db_query(self, thread, qnum, query):
        self._txn.append(query)
        return self.objects[DB_ID].execute(query)

    def end_txn(self, thread, queries):
        self.objects[DB_ID].commit()
        self._log(DB_ID, OpLogEntry(thread.rid, thread.opnum, DB_OP, tuple(queries)))
        self._txn = None

    def snapshot(self):
        return tuple(sorted((k, o.snapshot()) for k, o in self.objects.items()))


class Clock:
    """`time` source: globally non-decreasing, recorded per rid."""

    def __init__(self, base: int, step: int, nondet: dict):
        self.base = base
        self.step = step
        self.k = 0
        self.nondet = nondet

    def time(self, thread):
        v = self.base + self.k * self.step
        self.k += 1
        self.nondet.setdefault(thread.rid, []).append(("time", v))
        return v


@dataclass
class Recording:
    trace: Trace
    reports: Reports
    schedule: list
    instructions: int


class _Server:
    def __init__(self, program: Program, arrivals: list, config: ExecutorConfig):
        self.program = program
        self.arrivals = arrivals
        self.by_rid = {a.rid: a for a in arrivals}
        if len(self.by_rid) != len(arrivals):
            raise ScheduleError("duplicate rid in arrivals")
        self.state = OnlineState()
        self.reports = Reports()
        self.clock = Clock(config.time_base, config.time_step, self.reports.nondet)
        self.events: list = []
        self.threads: dict[str, Thread] = {}
        self.realized: list[str] = []

    def arrive(self, rid: str):
        a = self.by_rid[rid]
        self.events.append(request(rid, a.handler, a.param_dict))
        try:
            self.threads[rid] = Thread(self.program, rid, a.handler, a.param_dict)
        except Trap as e:
            raise ExecutionFault(f"{rid}: {e}") from None
        self.realized.append(rid)

    def step(self, rid: str) -> bool:
        """Advance rid by one event; True once it has responded."""
        t = self.threads[rid]
        self.realized.append(rid)
        try:
            ev = run_to_next_event(t, self.state, self.clock)
        except Trap as e:
            raise ExecutionFault(f"{rid}: {e}") from None
        if isinstance(ev, Output):
            self.events.append(response(rid, ev.body))
            self.reports.counts[rid] = t.ops_issued
            self.reports.cf.setdefault(t.digest, set()).add(rid)
            return True
        return False

    def recording(self) -> Recording:
        self.reports.logs = {k: list(v) for k, v in self.state.logs.items()}
        total = sum(t.steps for t in self.threads.values())
        return Recording(Trace(self.events), self.reports, self.realized, total)


def _run_explicit(srv: _Server, schedule: list):
    nxt = 0
    for rid in schedule:
        if rid not in srv.threads:
            if nxt >= len(srv.arrivals) or srv.arrivals[nxt].rid != rid:
                raise ScheduleError(f"{rid} scheduled out of arrival order")
            srv.arrive(rid)
            nxt += 1
        elif not srv.threads[rid].halted:
            srv.step(rid)
    if nxt != len(srv.arrivals):
        raise ScheduleError(f"{srv.arrivals[nxt].rid} never scheduled")
    stuck = [r for r, t in srv.threads.items() if not t.halted]
    if stuck:
        raise ScheduleError(f"schedule underruns {stuck[0]}: it never responds")


def _run_random(srv: _Server, w: Workload):
    rng = random.Random(w.seed)
    cap = max(1, w.concurrency)
    live: list[str] = []
    nxt = 0
    while nxt < len(srv.arrivals) or live:
        can_arrive = (
            nxt < len(srv.arrivals) and len(live) < cap
            and (not live or srv.arrivals[nxt].epoch == srv.by_rid[live[0]].epoch)
        )
        if can_arrive and (not live or rng.random() < w.arrive_prob):
            rid = srv.arrivals[nxt].rid
            nxt += 1
            srv.arrive(rid)
            live.append(rid)
            continue
        rid = live[rng.randrange(len(live))]
        if srv.step(rid):
            live.remove(rid)


def run(program: Program, workload: Workload, config: Optional[ExecutorConfig] = None) -> Recording:
    config = config or ExecutorConfig()
    arrivals = list(workload.arrivals)
    for a in arrivals:
        if a.handler not in program.handlers:
            raise ScheduleError(f"{a.rid}: unknown handler {a.handler!r}")
    srv = _Server(program, arrivals, config)
    if workload.schedule is not None:
        _run_explicit(srv, list(workload.schedule))
    else:
        _run_random(srv, workload)
    rec = srv.recording()
    if config.mode == TAMPERED:
        from .tamper import tamper
        rec.trace, rec.reports = tamper(rec.trace, rec.reports, config.mutation, config.seed)
    elif config.mode != WELL_BEHAVED:
        raise ValueError(f"unknown executor mode {config.mode!r}")
    return rec


def serve(program: Program, workload: Workload, config: Optional[ExecutorConfig] = None):
    """Serve a workload; returns (trace, reports)."""
    rec = run(program, workload, config)
    return rec.trace, rec.reports
