"""The request-handler language: listing parser, scalar interpreter, digests.

A listing is line oriented::

    handler greet          # opens a handler
    input name who         # params are read with `input`
    const hi "hello "
    binop msg concat hi name
    output msg
    halt

Jump targets are 0-based instruction indices within the handler.  A
``begin_txn .. end_txn`` block may hold only ``db`` queries and pure
computation; the whole block is one state operation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

from .objects import (
    CMPS, DB_ID, DB_OP, KV_GET, KV_ID, KV_SET, QUERY_KINDS, REGISTER_READ,
    REGISTER_WRITE, Query, register_id, render_rows,
)
from .values import Scalar, canon, is_int, render, same, wrap_int64

BINOPS = ("add", "sub", "mul", "lt", "eq", "concat")
PURE_OPS = ("const", "mov", "binop", "jz", "jmp", "input")
TXN_OPS = PURE_OPS + ("db",)
MAX_STEPS = 1_000_000

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 2**64 - 1


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


class Trap(RuntimeError):
    """Deterministic execution fault (unset variable, type error, ...)."""


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: Scalar


@dataclass(frozen=True)
class QueryTemplate:
    kind: str
    table: str
    pk: Any = None
    col: Optional[str] = None
    cmp: Optional[str] = None
    val: Any = None
    row: tuple = ()

    def operands(self):
        ops = [x for x in (self.pk, self.val) if x is not None]
        return ops + [v for _, v in self.row]


@dataclass(frozen=True)
class Instr:
    op: str
    args: tuple = ()
    line: int = 0

    def operands(self) -> list:
        """Operands that are evaluated (variables or literals)."""
        a = self.args
        if self.op == "mov":
            return [a[1]]
        if self.op == "binop":
            return [a[2], a[3]]
        if self.op in ("jz", "output"):
            return [a[0]]
        if self.op in ("regread", "kvget"):
            return [a[1]]
        if self.op in ("regwrite", "kvset"):
            return [a[0], a[1]]
        if self.op == "db":
            return a[1].operands()
        return []


@dataclass
class Handler:
    name: str
    code: list


@dataclass
class Program:
    handlers: dict = field(default_factory=dict)
    source: str = ""

    def __getitem__(self, name: str) -> Handler:
        return self.handlers[name]


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(r'\s*(?:(#.*)|((?:"(?:[^"\\]|\\.)*"|[^\s"#])+))')
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_INT = re.compile(r"^-?[0-9]+$")


def tokenize(line: str, lineno: int = 0) -> list[str]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m or m.end() == pos:
            if line[pos:].strip() == "":
                break
            raise ParseError("unterminated string literal", lineno)
        if m.group(1) is not None:
            break
        if m.group(2) is None:
            break
        toks.append(m.group(2))
        pos = m.end()
    return toks


def parse_literal(tok: str, lineno: int) -> Scalar:
    if _INT.match(tok):
        return wrap_check(int(tok), lineno)
    if tok == "true":
        return True
    if tok == "false":
        return False
    if tok.startswith('"'):
        try:
            v = json.loads(tok)
        except json.JSONDecodeError:
            raise ParseError(f"bad string literal {tok}", lineno) from None
        if not isinstance(v, str):
            raise ParseError(f"bad string literal {tok}", lineno)
        return v
    raise ParseError(f"expected literal, got {tok!r}", lineno)


def wrap_check(v: int, lineno: int) -> int:
    if wrap_int64(v) != v:
        raise ParseError(f"integer literal out of int64 range: {v}", lineno)
    return v


def parse_operand(tok: str, lineno: int):
    if _IDENT.match(tok) and tok not in ("true", "false"):
        return Var(tok)
    return Lit(parse_literal(tok, lineno))


def parse_ident(tok: str, lineno: int, what: str) -> str:
    if not _IDENT.match(tok):
        raise ParseError(f"bad {what} {tok!r}", lineno)
    return tok


def parse_key(tok: str, lineno: int) -> str:
    if tok.startswith('"'):
        v = parse_literal(tok, lineno)
        assert isinstance(v, str)
        return v
    return parse_ident(tok, lineno, "param key")


def parse_target(tok: str, lineno: int) -> int:
    if not re.match(r"^[0-9]+$", tok):
        raise ParseError(f"bad jump target {tok!r}", lineno)
    return int(tok)


def _parse_query(toks: list[str], lineno: int) -> QueryTemplate:
    if not toks or toks[0] not in QUERY_KINDS:
        raise ParseError(f"expected one of {QUERY_KINDS}", lineno)
    kind, rest = toks[0], toks[1:]
    if not rest:
        raise ParseError(f"{kind}: missing table", lineno)
    table = parse_ident(rest[0], lineno, "table name")
    rest = rest[1:]
    if kind == "insert":
        if not rest:
            raise ParseError("insert: missing pk", lineno)
        row = []
        for t in rest[1:]:
            col, eq, val = t.partition("=")
            if not eq or not val:
                raise ParseError(f"insert: expected col=value, got {t!r}", lineno)
            row.append((parse_ident(col, lineno, "column"), parse_operand(val, lineno)))
        cols = [c for c, _ in row]
        if len(set(cols)) != len(cols) or "pk" in cols:
            raise ParseError("insert: duplicate or reserved column", lineno)
        return QueryTemplate(kind, table, pk=parse_operand(rest[0], lineno),
                             row=tuple(sorted(row, key=lambda cv: cv[0])))
    if kind == "update":
        if len(rest) != 3:
            raise ParseError("update expects: table pk col value", lineno)
        col = parse_ident(rest[1], lineno, "column")
        if col == "pk":
            raise ParseError("update: cannot rewrite pk", lineno)
        return QueryTemplate(kind, table, pk=parse_operand(rest[0], lineno),
                             col=col, val=parse_operand(rest[2], lineno))
    if kind == "select":
        if len(rest) != 3 or rest[1] not in CMPS:
            raise ParseError("select expects: table col eq|lt value", lineno)
        return QueryTemplate(kind, table, col=parse_ident(rest[0], lineno, "column"),
                             cmp=rest[1], val=parse_operand(rest[2], lineno))
    if len(rest) != 1:
        raise ParseError("delete expects: table pk", lineno)
    return QueryTemplate(kind, table, pk=parse_operand(rest[0], lineno))


_ARITY = {
    "const": 2, "mov": 2, "binop": 4, "jz": 2, "jmp": 1, "input": 2,
    "output": 1, "regread": 2, "regwrite": 2, "kvget": 2, "kvset": 2,
    "begin_txn": 0, "end_txn": 0, "time": 1, "halt": 0,
}


def _parse_instr(toks: list[str], lineno: int) -> Instr:
    op, a = toks[0], toks[1:]
    if op == "db":
        if len(a) < 2:
            raise ParseError("db expects: dst query...", lineno)
        return Instr(op, (parse_ident(a[0], lineno, "variable"), _parse_query(a[1:], lineno)), lineno)
    if op not in _ARITY:
        raise ParseError(f"unknown opcode {op!r}", lineno)
    if len(a) != _ARITY[op]:
        raise ParseError(f"{op} expects {_ARITY[op]} operands, got {len(a)}", lineno)
    dst = lambda t: parse_ident(t, lineno, "variable")  # noqa: E731
    opnd = lambda t: parse_operand(t, lineno)  # noqa: E731
    if op == "const":
        return Instr(op, (dst(a[0]), Lit(parse_literal(a[1], lineno))), lineno)
    if op == "mov":
        return Instr(op, (dst(a[0]), opnd(a[1])), lineno)
    if op == "binop":
        if a[1] not in BINOPS:
            raise ParseError(f"unknown binop {a[1]!r}", lineno)
        return Instr(op, (dst(a[0]), a[1], opnd(a[2]), opnd(a[3])), lineno)
    if op == "jz":
        return Instr(op, (opnd(a[0]), parse_target(a[1], lineno)), lineno)
    if op == "jmp":
        return Instr(op, (parse_target(a[0], lineno),), lineno)
    if op == "input":
        return Instr(op, (dst(a[0]), parse_key(a[1], lineno)), lineno)
    if op == "output":
        return Instr(op, (opnd(a[0]),), lineno)
    if op in ("regread", "kvget"):
        return Instr(op, (dst(a[0]), opnd(a[1])), lineno)
    if op in ("regwrite", "kvset"):
        return Instr(op, (opnd(a[0]), opnd(a[1])), lineno)
    if op == "time":
        return Instr(op, (dst(a[0]),), lineno)
    return Instr(op, (), lineno)


def _validate(h: Handler) -> None:
    code = h.code
    n = len(code)
    block_of = [None] * n  # index of enclosing begin_txn (begin itself excluded)
    open_at = None
    for idx, ins in enumerate(code):
        if ins.op == "begin_txn":
            if open_at is not None:
                raise ParseError("nested begin_txn", ins.line)
            open_at = idx
            continue
        if open_at is not None:
            block_of[idx] = open_at
            if ins.op == "end_txn":
                open_at = None
            elif ins.op not in TXN_OPS:
                raise ParseError(f"{ins.op} not allowed inside a transaction", ins.line)
        elif ins.op == "end_txn":
            raise ParseError("end_txn without begin_txn", ins.line)
        elif ins.op == "db":
            raise ParseError("db query outside a transaction", ins.line)
    if open_at is not None:
        raise ParseError("unterminated transaction", code[open_at].line)
    for idx, ins in enumerate(code):
        if ins.op not in ("jz", "jmp"):
            continue
        target = ins.args[-1]
        if not 0 <= target < n:
            raise ParseError(f"invalid jump target {target}", ins.line)
        if block_of[idx] != block_of[target]:
            raise ParseError(f"jump {idx}->{target} crosses a transaction boundary", ins.line)


def parse_program(text: str) -> Program:
    """Parse and validate a listing."""
    prog = Program(source=text)
    current: Optional[Handler] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = tokenize(raw, lineno)
        if not toks:
            continue
        if toks[0] == "handler":
            if len(toks) != 2:
                raise ParseError("handler expects a name", lineno)
            name = parse_ident(toks[1], lineno, "handler name")
            if name in prog.handlers:
                raise ParseError(f"duplicate handler {name!r}", lineno)
            if current is not None:
                _validate(current)
            current = Handler(name, [])
            prog.handlers[name] = current
            continue
        if current is None:
            raise ParseError("instruction outside a handler", lineno)
        current.code.append(_parse_instr(toks, lineno))
    if current is not None:
        _validate(current)
    return prog


# --- semantics shared by every interpreter --------------------------------

def eval_binop(op: str, a: Scalar, b: Scalar) -> Scalar:
    if op == "eq":
        return same(a, b)
    if op == "concat":
        return render(a) + render(b)
    if op == "lt":
        if is_int(a) and is_int(b):
            return a < b
        if isinstance(a, str) and isinstance(b, str):
            return a < b
        raise Trap(f"lt on {type(a).__name__} and {type(b).__name__}")
    if not (is_int(a) and is_int(b)):
        raise Trap(f"{op} needs ints, got {a!r} and {b!r}")
    if op == "add":
        return wrap_int64(a + b)
    if op == "sub":
        return wrap_int64(a - b)
    if op == "mul":
        return wrap_int64(a * b)
    raise Trap(f"unknown binop {op}")


def is_zero(v: Scalar) -> bool:
    """The jz condition: jump when the value is false or 0."""
    if isinstance(v, bool):
        return not v
    if is_int(v):
        return v == 0
    raise Trap(f"jz on non-numeric value {v!r}")


def make_query(t: QueryTemplate, get) -> Query:
    try:
        return Query(
            kind=t.kind, table=t.table,
            pk=get(t.pk) if t.pk is not None else None,
            col=t.col, cmp=t.cmp,
            val=get(t.val) if t.val is not None else None,
            row=tuple((c, get(v)) for c, v in t.row),
        )
    except ValueError as e:
        raise Trap(str(e)) from None


def query_value(q: Query, rows) -> Scalar:
    """What a db instruction stores in its destination."""
    return render_rows(rows) if q.is_read else True


def register_object(name: Scalar) -> str:
    if not isinstance(name, str):
        raise Trap(f"register name must be a string, got {name!r}")
    return register_id(name)


def kv_key(key: Scalar) -> str:
    if not isinstance(key, str):
        raise Trap(f"kv key must be a string, got {key!r}")
    return key


def digest_start(handler: str) -> int:
    return digest_fold(FNV_OFFSET, handler.encode("utf-8") + b"\x00")


def digest_fold(h: int, data: bytes) -> int:
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def digest_branch(h: int, site: int, taken: bool) -> int:
    return digest_fold(h, site.to_bytes(4, "little") + (b"\x01" if taken else b"\x00"))


def digest_of(handler: str, branches) -> int:
    """Digest of a handler name and a sequence of (site, taken) pairs."""
    h = digest_start(handler)
    for site, taken in branches:
        h = digest_branch(h, site, taken)
    return h


# --- scalar interpreter ----------------------------------------------------

@dataclass(frozen=True)
class StateOp:
    obj: str
    optype: str
    contents: tuple


@dataclass(frozen=True)
class Output:
    body: bytes


class StateBackend(Protocol):
    def state_op(self, thread: "Thread", obj: str, optype: str, contents: tuple) -> Scalar: ...
    def begin_txn(self, thread: "Thread") -> None: ...
    def db_query(self, thread: "Thread", qnum: int, query: Query): ...
    def end_txn(self, thread: "Thread", queries: tuple) -> None: ...


class NondetSource(Protocol):
    def time(self, thread: "Thread") -> int: ...


class Thread:
    """One request's execution context."""

    def __init__(self, program: Program, rid: str, handler: str, params: dict):
        if handler not in program.handlers:
            raise Trap(f"unknown handler {handler!r}")
        self.rid = rid
        self.handler = program.handlers[handler]
        self.params = dict(params)
        self.vars: dict[str, Scalar] = {}
        self.ip = 0
        self.out: list[str] = []
        self.digest = digest_start(handler)
        self.opnum = 1
        self.nd_used = 0
        self.steps = 0
        self.halted = False

    @property
    def ops_issued(self) -> int:
        return self.opnum - 1

    def get(self, operand) -> Scalar:
        if isinstance(operand, Lit):
            return operand.value
        try:
            return self.vars[operand.name]
        except KeyError:
            raise Trap(f"read of unset variable {operand.name!r}") from None

    def state_key(self):
        """Hashable summary of everything that drives future behaviour."""
        return (self.ip, self.opnum, self.nd_used, self.halted, tuple(self.out),
                tuple(sorted((k, canon(v)) for k, v in self.vars.items())))


def run_to_next_event(t: Thread, backend: StateBackend, nondet: NondetSource):
    """Run until a state operation completes (StateOp) or the handler halts
    (Output).  Raises Trap on a program fault."""
    if t.halted:
        raise Trap("thread already halted")
    code = t.handler.code
    txn_queries: Optional[list] = None
    while True:
        if t.ip >= len(code):
            t.halted = True
            return Output("".join(t.out).encode("utf-8"))
        if t.steps >= MAX_STEPS:
            raise Trap("step limit exceeded")
        ins = code[t.ip]
        t.steps += 1
        op, a = ins.op, ins.args
        nxt = t.ip + 1
        if op == "const":
            t.vars[a[0]] = a[1].value
        elif op == "mov":
            t.vars[a[0]] = t.get(a[1])
        elif op == "binop":
            t.vars[a[0]] = eval_binop(a[1], t.get(a[2]), t.get(a[3]))
        elif op == "jz":
            taken = is_zero(t.get(a[0]))
            t.digest = digest_branch(t.digest, t.ip, taken)
            if taken:
                nxt = a[1]
        elif op == "jmp":
            t.digest = digest_branch(t.digest, t.ip, True)
            nxt = a[0]
        elif op == "input":
            if a[1] not in t.params:
                raise Trap(f"missing request parameter {a[1]!r}")
            t.vars[a[0]] = t.params[a[1]]
        elif op == "output":
            t.out.append(render(t.get(a[0])))
        elif op == "time":
            t.vars[a[0]] = nondet.time(t)
            t.nd_used += 1
        elif op == "halt":
            t.ip = nxt
            t.halted = True
            return Output("".join(t.out).encode("utf-8"))
        elif op in ("regread", "regwrite", "kvget", "kvset"):
            if op == "regread":
                obj, optype, contents = register_object(t.get(a[1])), REGISTER_READ, ()
            elif op == "regwrite":
                obj, optype, contents = register_object(t.get(a[0])), REGISTER_WRITE, (t.get(a[1]),)
            elif op == "kvget":
                obj, optype, contents = KV_ID, KV_GET, (kv_key(t.get(a[1])),)
            else:
                obj, optype, contents = KV_ID, KV_SET, (kv_key(t.get(a[0])), t.get(a[1]))
            result = backend.state_op(t, obj, optype, contents)
            if op in ("regread", "kvget"):
                t.vars[a[0]] = result
            t.ip = nxt
            t.opnum += 1
            return StateOp(obj, optype, contents)
        elif op == "begin_txn":
            backend.begin_txn(t)
            txn_queries = []
        elif op == "db":
            q = make_query(a[1], t.get)
            txn_queries.append(q)
            rows = backend.db_query(t, len(txn_queries), q)
            t.vars[a[0]] = query_value(q, rows)
        elif op == "end_txn":
            queries = tuple(txn_queries)
            backend.end_txn(t, queries)
            t.ip = nxt
            t.opnum += 1
            return StateOp(DB_ID, DB_OP, queries)
        else:
            raise Trap(f"unknown opcode {op}")
        t.ip = nxt
