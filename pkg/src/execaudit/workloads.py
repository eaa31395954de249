"""Programs, workloads and hand-built report sets for tests and experiments.

Includes the three two-request register scenarios (``fig4a``/``fig4b``/
``fig4c``), a seeded generator of trap-free random programs, synthetic
trace/report pairs for timing the graph checks, and a read-heavy table-store
workload for measuring batched replay.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .executor import Arrival, Workload, serve
from .lang import Program, digest_of, parse_program
from .objects import REGISTER_READ, REGISTER_WRITE, register_id
from .trace import OpLogEntry, Reports, Trace, request, response

INIT = "init"


# --- register scenarios ---------------------------------------------------------

CROSS_PROGRAM = """\
handler init
regwrite "A" 0
regwrite "B" 0
halt

handler w_then_r_AB
regwrite "A" 1
regread x "B"
output x
halt

handler w_then_r_BA
regwrite "B" 1
regread x "A"
output x
halt
"""

CROSS_ARRIVALS = [
    Arrival("r0", INIT, (), 0),
    Arrival("r1", "w_then_r_AB", (), 1),
    Arrival("r2", "w_then_r_BA", (), 1),
]

PRESETS = ("fig4a", "fig4b", "fig4c")


def _w(rid, opnum, v):
    return OpLogEntry(rid, opnum, REGISTER_WRITE, (v,))


def _r(rid, opnum):
    return OpLogEntry(rid, opnum, REGISTER_READ, ())


def _cross_cf():
    return {
        digest_of(INIT, ()): {"r0"},
        digest_of("w_then_r_AB", ()): {"r1"},
        digest_of("w_then_r_BA", ()): {"r2"},
    }


def preset(name: str):
    """Returns (program, trace, reports) for a named scenario."""
    prog = parse_program(CROSS_PROGRAM)
    init = [request("r0", INIT), response("r0", b"")]
    if name == "fig4c":
        wl = Workload(CROSS_ARRIVALS, schedule=["r0"] * 4 + ["r1", "r2"] * 4)
        trace, reports = serve(prog, wl)
        return prog, trace, reports
    if name == "fig4a":
        # r1 finishes before r2 starts, yet the logs claim each read saw the
        # other's write
        events = init + [request("r1", "w_then_r_AB"), response("r1", b"1"),
                         request("r2", "w_then_r_BA"), response("r2", b"0")]
        logs = {
            register_id("A"): [_w("r0", 1, 0), _r("r2", 2), _w("r1", 1, 1)],
            register_id("B"): [_w("r0", 2, 0), _w("r2", 1, 1), _r("r1", 2)],
        }
    elif name == "fig4b":
        # concurrent, both claim to have read the initial value
        events = init + [request("r1", "w_then_r_AB"), request("r2", "w_then_r_BA"),
                         response("r1", b"0"), response("r2", b"0")]
        logs = {
            register_id("A"): [_w("r0", 1, 0), _r("r2", 2), _w("r1", 1, 1)],
            register_id("B"): [_w("r0", 2, 0), _r("r1", 2), _w("r2", 1, 1)],
        }
    else:
        raise KeyError(f"unknown preset {name!r}")
    reports = Reports(cf=_cross_cf(), logs=logs, counts={"r0": 2, "r1": 2, "r2": 2})
    return prog, Trace(events), reports


# --- random programs ---------------------------------------------------------------

@dataclass
class GenConfig:
    handlers: int = 3
    params: int = 2
    registers: int = 2
    tables: int = 2
    blocks: int = 6
    max_ops: int = 5        # state operations per handler, all paths
    param_range: int = 4
    use_kv: bool = True
    use_db: bool = True
    use_time: bool = True
    init_rows: int = 2


@dataclass
class GeneratedProgram:
    program: Program
    params: dict = field(default_factory=dict)  # handler -> param keys


class _Emitter:
    """Straight-line emitter tracking typed variables so output never traps."""

    def __init__(self, rng: random.Random, cfg: GenConfig):
        self.rng = rng
        self.cfg = cfg
        self.lines: list = []
        self.ints: list = []
        self.bools: list = []
        self.other: list = []
        self.n = 0
        self.ops = 0

    def fresh(self) -> str:
        self.n += 1
        return f"v{self.n}"

    def emit(self, line: str):
        self.lines.append(line)

    def any_var(self):
        pool = self.ints + self.bools + self.other
        return self.rng.choice(pool) if pool else "0"

    def int_operand(self) -> str:
        if self.ints and self.rng.random() < 0.8:
            return self.rng.choice(self.ints)
        return str(self.rng.randint(-3, 5))

    def compute(self):
        rng = self.rng
        d = self.fresh()
        kind = rng.random()
        if kind < 0.55:
            op = rng.choice(("add", "sub", "mul"))
            self.emit(f"binop {d} {op} {self.int_operand()} {self.int_operand()}")
            self.ints.append(d)
        elif kind < 0.8:
            op = rng.choice(("lt", "eq"))
            self.emit(f"binop {d} {op} {self.int_operand()} {self.int_operand()}")
            self.bools.append(d)
        else:
            self.emit(f'binop {d} concat "s" {self.any_var()}')
            self.other.append(d)

    def reg(self):
        name = f'"R{self.rng.randrange(self.cfg.registers)}"'
        if self.rng.random() < 0.5:
            d = self.fresh()
            self.emit(f"regread {d} {name}")
            self.ints.append(d)
        else:
            self.emit(f"regwrite {name} {self.int_operand()}")
        self.ops += 1

    def kv(self):
        k = self.fresh()
        self.emit(f'binop {k} concat "k" {self.int_operand()}')
        self.other.append(k)
        if self.rng.random() < 0.5:
            d = self.fresh()
            self.emit(f"kvget {d} {k}")
            self.other.append(d)
        else:
            self.emit(f"kvset {k} {self.any_var()}")
        self.ops += 1

    def db(self):
        rng = self.rng
        table = f"t{rng.randrange(self.cfg.tables)}"
        self.emit("begin_txn")
        for _ in range(rng.randint(1, 2)):
            d = self.fresh()
            r = rng.random()
            if r < 0.4:
                self.emit(f"db {d} insert {table} {self.int_operand()} v={self.int_operand()}")
                self.bools.append(d)
            elif r < 0.55:
                self.emit(f"db {d} update {table} {self.int_operand()} v {self.int_operand()}")
                self.bools.append(d)
            elif r < 0.65:
                self.emit(f"db {d} delete {table} {self.int_operand()}")
                self.bools.append(d)
            else:
                col = rng.choice(("v", "pk"))
                cmp = rng.choice(("eq", "lt"))
                self.emit(f"db {d} select {table} {col} {cmp} {self.int_operand()}")
                self.other.append(d)
        self.emit("end_txn")
        self.ops += 1

    def time(self):
        d = self.fresh()
        self.emit(f"time {d}")
        self.ints.append(d)

    def output(self):
        self.emit(f"output {self.any_var()}")

    def block(self, depth: int = 0):
        rng = self.rng
        choices = ["compute", "compute", "output"]
        if self.ops < self.cfg.max_ops:
            choices += ["reg", "reg"]
            if self.cfg.use_kv:
                choices.append("kv")
            if self.cfg.use_db:
                choices.append("db")
        if self.cfg.use_time:
            choices.append("time")
        if depth == 0 and (self.ints or self.bools):
            choices += ["branch", "branch"]
        kind = rng.choice(choices)
        if kind == "branch":
            self.branch(depth)
        else:
            getattr(self, kind)()

    def branch(self, depth: int):
        rng = self.rng
        cond = rng.choice(self.ints + self.bools)
        saved = (list(self.ints), list(self.bools), list(self.other))
        jz_at = len(self.lines)
        self.emit("")  # patched below
        for _ in range(rng.randint(1, 2)):
            self.block(depth + 1)
        self.ints, self.bools, self.other = (list(x) for x in saved)
        if rng.random() < 0.5:
            jmp_at = len(self.lines)
            self.emit("")
            else_at = len(self.lines)
            for _ in range(rng.randint(1, 2)):
                self.block(depth + 1)
            self.ints, self.bools, self.other = (list(x) for x in saved)
            self.lines[jmp_at] = f"jmp {len(self.lines)}"
            self.lines[jz_at] = f"jz {cond} {else_at}"
        else:
            self.lines[jz_at] = f"jz {cond} {len(self.lines)}"


def _gen_handler(rng, cfg: GenConfig, name: str) -> tuple:
    e = _Emitter(rng, cfg)
    keys = [chr(ord("a") + i) for i in range(cfg.params)]
    for k in keys:
        d = e.fresh()
        e.emit(f"input {d} {k}")
        e.ints.append(d)
    for _ in range(cfg.blocks):
        e.block()
    for _ in range(rng.randint(1, 2)):
        e.output()
    e.emit("halt")
    return [f"handler {name}"] + e.lines, keys


def gen_init(cfg: GenConfig) -> list:
    lines = [f"handler {INIT}"]
    lines += [f'regwrite "R{i}" 0' for i in range(cfg.registers)]
    if cfg.use_db and cfg.init_rows:
        lines.append("begin_txn")
        for t in range(cfg.tables):
            for pk in range(cfg.init_rows):
                lines.append(f"db w{t}_{pk} insert t{t} {pk} v={pk}")
        lines.append("end_txn")
    lines.append("halt")
    return lines


def random_program(seed: int, cfg: GenConfig = None) -> GeneratedProgram:
    cfg = cfg or GenConfig()
    rng = random.Random(seed)
    lines = gen_init(cfg)
    params = {INIT: []}
    for h in range(cfg.handlers):
        name = f"h{h}"
        hl, keys = _gen_handler(rng, cfg, name)
        lines += [""] + hl
        params[name] = keys
    return GeneratedProgram(parse_program("\n".join(lines) + "\n"), params)


def random_arrivals(rng: random.Random, gen: GeneratedProgram, requests: int,
                    param_range: int = 4) -> list:
    """r0 runs the init handler alone in epoch 0; the rest share epoch 1."""
    if requests <= 0:
        return []
    out = [Arrival("r0", INIT, (), 0)]
    names = sorted(h for h in gen.params if h != INIT)
    for i in range(1, requests):
        h = rng.choice(names)
        params = tuple((k, rng.randrange(param_range)) for k in gen.params[h])
        out.append(Arrival(f"r{i}", h, params, 1))
    return out


@dataclass
class Instance:
    program: Program
    trace: Trace
    reports: Reports
    seed: int
    instructions: int = 0


def random_instance(seed: int, requests: int, concurrency: int,
                    cfg: GenConfig = None, arrive_prob: float = 0.5) -> Instance:
    """Seeded well-behaved recording of a random program."""
    from .executor import run
    cfg = cfg or GenConfig()
    gen = random_program(seed, cfg)
    rng = random.Random(seed * 7919 + 1)
    arrivals = random_arrivals(rng, gen, requests, cfg.param_range)
    rec = run(gen.program, Workload(arrivals, seed=seed, concurrency=concurrency,
                                    arrive_prob=arrive_prob))
    return Instance(gen.program, rec.trace, rec.reports, seed, rec.instructions)


TINY = GenConfig(handlers=2, params=1, registers=2, tables=1, blocks=3, max_ops=2,
                 param_range=2, init_rows=1)


def tiny_instance(seed: int) -> Instance:
    """At most four requests including init, at most three state ops each."""
    rng = random.Random(seed)
    return random_instance(seed, rng.randint(2, 4), rng.randint(1, 3), TINY)


# --- traces without programs ------------------------------------------------------------

def epoch_trace(p: int, epochs: int) -> Trace:
    """``epochs`` rounds of ``p`` concurrent requests; each round responds in
    full before the next one arrives."""
    events = []
    k = 0
    for _ in range(epochs):
        rids = [f"r{k + i}" for i in range(p)]
        k += p
        events += [request(r, "h") for r in rids]
        events += [response(r, b"") for r in rids]
    return Trace(events)


def random_balanced_trace(rng: random.Random, n: int) -> Trace:
    events = []
    pending = []
    issued = 0
    while issued < n or pending:
        if issued < n and (not pending or rng.random() < 0.5):
            rid = f"r{issued}"
            issued += 1
            events.append(request(rid, "h"))
            pending.append(rid)
        else:
            rid = pending.pop(rng.randrange(len(pending)))
            events.append(response(rid, b""))
    return Trace(events)


def synthetic_reports(requests: int, ops_per_request: int, p: int, objects: int, seed: int = 0):
    """Acyclic (trace, reports) built directly: epochs of ``p`` concurrent
    requests whose register operations are serialized in one random global
    interleaving per epoch."""
    rng = random.Random(seed)
    events = []
    logs: dict = {register_id(f"R{i}"): [] for i in range(objects)}
    counts = {}
    for start in range(0, requests, p):
        rids = [f"r{i}" for i in range(start, min(start + p, requests))]
        events += [request(r, "h") for r in rids]
        left = {r: ops_per_request for r in rids}
        live = list(rids)
        while live:
            r = live[rng.randrange(len(live))]
            opnum = ops_per_request - left[r] + 1
            obj = register_id(f"R{rng.randrange(objects)}")
            logs[obj].append(OpLogEntry(r, opnum, REGISTER_WRITE, (opnum,)))
            left[r] -= 1
            if not left[r]:
                live.remove(r)
        for r in rids:
            counts[r] = ops_per_request
        events += [response(r, b"") for r in rids]
    return Trace(events), Reports(cf={0: set(counts)}, logs=logs, counts=counts)


# --- read-heavy table workload ----------------------------------------------------------

def read_heavy_program(compute: int = 200, seed_rows: int = 1) -> Program:
    """Readers run a long univalent computation, then one select whose text is
    identical across readers; writers insert one row each."""
    lines = ["handler init", "begin_txn"]
    lines += [f"db w{pk} insert items {pk} v={pk}" for pk in range(seed_rows)]
    lines += ["end_txn", "halt", "", "handler reader", "input p id", "const acc 1"]
    for i in range(compute):
        lines.append(f"binop acc {('add', 'mul', 'sub')[i % 3]} acc {i % 7 + 1}")
    lines += ["begin_txn", "db rows select items v lt 1000", "end_txn",
              "output rows", "output acc", "halt", "",
              "handler writer", "input p id", "binop q add p 1000",
              "begin_txn", "db ok insert items q v=p", "end_txn", "output ok", "halt"]
    return parse_program("\n".join(lines) + "\n")


def read_heavy_workload(readers: int = 100, writers: int = 8, concurrency: int = 8,
                        seed: int = 0) -> Workload:
    rng = random.Random(seed)
    kinds = ["reader"] * readers + ["writer"] * writers
    rng.shuffle(kinds)
    arrivals = [Arrival("r0", INIT, (), 0)]
    for i, h in enumerate(kinds, start=1):
        arrivals.append(Arrival(f"r{i}", h, (("id", i),), 1))
    return Workload(arrivals, seed=seed, concurrency=concurrency)
