"""Online shared objects: atomic registers, a key-value store and a table store.

Each object numbers the operations applied to it (1, 2, ...); that number is
the object's serialization order and becomes the log sequence number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .values import ABSENT, Scalar, canon, decode, encode, is_int, same

REGISTER_READ = "RegisterRead"
REGISTER_WRITE = "RegisterWrite"
KV_GET = "KvGet"
KV_SET = "KvSet"
DB_OP = "DBOp"
OPTYPES = (REGISTER_READ, REGISTER_WRITE, KV_GET, KV_SET, DB_OP)
READ_OPTYPES = (REGISTER_READ, KV_GET, DB_OP)

REG_PREFIX = "reg:"
KV_ID = "kv"
DB_ID = "db"

QUERY_KINDS = ("insert", "update", "select", "delete")
CMPS = ("eq", "lt")


def register_id(name: str) -> str:
    return REG_PREFIX + name


class MalformedOp(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Query:
    """A concrete (operand-substituted) table query."""

    kind: str
    table: str
    pk: Scalar = None
    col: Optional[str] = None
    cmp: Optional[str] = None
    val: Scalar = None
    row: tuple = ()

    def __post_init__(self):
        if self.kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}")
        if not isinstance(self.table, str) or not self.table:
            raise ValueError("table name must be a non-empty string")
        if self.kind in ("insert", "update", "delete") and not is_int(self.pk):
            raise ValueError(f"{self.kind}: pk must be an int, got {self.pk!r}")
        if self.kind == "select" and self.cmp not in CMPS:
            raise ValueError(f"select: bad comparison {self.cmp!r}")
        if self.kind in ("select", "update") and not isinstance(self.col, str):
            raise ValueError(f"{self.kind}: column name required")
        if self.kind == "update" and self.col == "pk":
            raise ValueError("update: cannot rewrite pk")
        if self.kind == "insert":
            cols = [c for c, _ in self.row]
            if len(set(cols)) != len(cols) or "pk" in cols:
                raise ValueError("insert: duplicate or reserved column")

    @property
    def is_read(self) -> bool:
        return self.kind == "select"

    def canon_key(self):
        return ("q", self.kind, self.table, canon(self.pk), self.col, self.cmp,
                canon(self.val), tuple((c, canon(v)) for c, v in self.row))

    def __eq__(self, other):
        return isinstance(other, Query) and self.canon_key() == other.canon_key()

    def __hash__(self):
        return hash(self.canon_key())

    def to_json(self) -> str:
        d: dict[str, Any] = {"k": self.kind, "t": self.table}
        if self.kind != "select":
            d["pk"] = encode(self.pk)
        if self.kind in ("select", "update"):
            d["c"] = self.col
            d["v"] = encode(self.val)
        if self.kind == "select":
            d["o"] = self.cmp
        if self.kind == "insert":
            d["r"] = [[c, encode(v)] for c, v in self.row]
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Query":
        d = json.loads(text)
        row = tuple((c, decode(v)) for c, v in d.get("r", ()))
        return cls(kind=d["k"], table=d["t"],
                   pk=decode(d["pk"]) if "pk" in d else None,
                   col=d.get("c"), cmp=d.get("o"),
                   val=decode(d["v"]) if "v" in d else None, row=row)

    @property
    def text(self) -> str:
        return self.to_json()

    def __repr__(self):
        return f"Query({self.to_json()})"


def compare(value: Scalar, cmp: str, target: Scalar) -> bool:
    if cmp == "eq":
        return same(value, target)
    if is_int(value) and is_int(target):
        return value < target
    if isinstance(value, str) and isinstance(target, str):
        return value < target
    return False


def row_matches(pk: int, cols: dict, q: Query) -> bool:
    if q.col == "pk":
        return compare(pk, q.cmp, q.val)
    if q.col not in cols:
        return False
    return compare(cols[q.col], q.cmp, q.val)


def freeze_row(pk: int, cols: dict) -> tuple:
    return (pk, tuple(sorted(cols.items())))


def render_rows(rows) -> str:
    """Program-visible text of a select result."""
    return json.dumps([[pk, dict(cols)] for pk, cols in rows],
                      sort_keys=True, separators=(",", ":"))


class RegisterObject:
    def __init__(self, name: str):
        self.name = name
        self.value: Scalar = ABSENT
        self.seq = 0

    def apply(self, optype: str, contents: tuple):
        if optype == REGISTER_READ:
            if contents != ():
                raise MalformedOp("RegisterRead takes no operands")
            result = self.value
        elif optype == REGISTER_WRITE:
            if len(contents) != 1:
                raise MalformedOp("RegisterWrite takes one value")
            self.value = contents[0]
            result = None
        else:
            raise MalformedOp(f"register does not support {optype}")
        self.seq += 1
        return result

    def snapshot(self):
        return canon(self.value)


class KvStoreObject:
    def __init__(self):
        self.data: dict[str, Scalar] = {}
        self.seq = 0

    def apply(self, optype: str, contents: tuple):
        if optype == KV_GET:
            if len(contents) != 1 or not isinstance(contents[0], str):
                raise MalformedOp("KvGet takes one string key")
            result = self.data.get(contents[0], ABSENT)
        elif optype == KV_SET:
            if len(contents) != 2 or not isinstance(contents[0], str):
                raise MalformedOp("KvSet takes a string key and a value")
            self.data[contents[0]] = contents[1]
            result = None
        else:
            raise MalformedOp(f"kv store does not support {optype}")
        self.seq += 1
        return result

    def snapshot(self):
        return tuple(sorted((k, canon(v)) for k, v in self.data.items()))


@dataclass
class TableStoreObject:
    """Tables of rows keyed by int pk.  Insert on an existing pk replaces the
    row; update/delete of a missing pk is a no-op."""

    tables: dict = field(default_factory=dict)
    seq: int = 0

    def execute(self, q: Query):
        """Run one query in place; selects return rows, writes return None."""
        if q.kind == "select":
            rows = self.tables.get(q.table, {})
            return tuple(freeze_row(pk, rows[pk]) for pk in sorted(rows)
                         if row_matches(pk, rows[pk], q))
        table = self.tables.setdefault(q.table, {})
        if q.kind == "insert":
            table[q.pk] = dict(q.row)
        elif q.kind == "update":
            if q.pk in table:
                table[q.pk][q.col] = q.val
        else:
            table.pop(q.pk, None)
        return None

    def commit(self):
        self.seq += 1

    def apply(self, optype: str, contents: tuple):
        if optype != DB_OP:
            raise MalformedOp(f"table store does not support {optype}")
        if not all(isinstance(q, Query) for q in contents):
            raise MalformedOp("DBOp contents must be queries")
        results = [self.execute(q) for q in contents]
        self.commit()
        return results

    def snapshot(self):
        return tuple(sorted(
            (t, tuple(sorted((pk, canon(tuple(sorted(c.items())))) for pk, c in rows.items())))
            for t, rows in self.tables.items()))


def fresh_object(obj_id: str):
    if obj_id.startswith(REG_PREFIX):
        return RegisterObject(obj_id[len(REG_PREFIX):])
    if obj_id == KV_ID:
        return KvStoreObject()
    if obj_id == DB_ID:
        return TableStoreObject()
    raise MalformedOp(f"unknown object id {obj_id!r}")
