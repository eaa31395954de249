"""Trace and report data model, balance checking and the text file formats.

Trace file, one event per line in time order::

    REQ <rid> <handler> key=<value> ...
    RESP <rid> <base64 body>

Reports file::

    CF <tag-hex> <rid> ...
    M <rid> <count>
    OP <object-id> <seq> <rid> <opnum> <optype> <value> ...
    ND <rid> <idx> <builtin> <value>

Values use the typed tokens of :mod:`execaudit.values`; queries are
``q:<base64 json>``.  Reports are untrusted, so parsing only checks syntax.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field
from typing import Optional

from .objects import Query
from .values import Scalar, canon, decode, decode_name, encode, encode_name

REQ = "REQ"
RESP = "RESP"


class FormatError(ValueError):
    def __init__(self, msg: str, line: int = 0):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


def rid_sort_key(rid: str):
    return [(0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.split(r"(\d+)", rid)]


@dataclass(frozen=True, eq=False)
class Event:
    kind: str
    rid: str
    handler: str = ""
    params: tuple = ()
    body: bytes = b""

    def canon_key(self):
        return (self.kind, self.rid, self.handler,
                tuple((k, canon(v)) for k, v in self.params), self.body)

    def __eq__(self, other):
        return isinstance(other, Event) and self.canon_key() == other.canon_key()

    def __hash__(self):
        return hash(self.canon_key())

    @property
    def param_dict(self) -> dict:
        return dict(self.params)


def request(rid: str, handler: str, params: Optional[dict] = None) -> Event:
    return Event(REQ, rid, handler, tuple((params or {}).items()))


def response(rid: str, body: bytes) -> Event:
    return Event(RESP, rid, body=bytes(body))


@dataclass
class Trace:
    events: list = field(default_factory=list)

    def __eq__(self, other):
        return isinstance(other, Trace) and self.events == other.events

    def __len__(self):
        return len(self.events)

    def requests(self) -> dict:
        return {e.rid: e for e in self.events if e.kind == REQ}

    def responses(self) -> dict:
        return {e.rid: e.body for e in self.events if e.kind == RESP}

    def arrival_order(self) -> dict:
        order: dict[str, int] = {}
        for e in self.events:
            if e.kind == REQ and e.rid not in order:
                order[e.rid] = len(order)
        return order


@dataclass(frozen=True, eq=False)
class OpLogEntry:
    rid: str
    opnum: int
    optype: str
    contents: tuple = ()

    def canon_key(self):
        return (self.rid, self.opnum, self.optype, canon(self.contents))

    def __eq__(self, other):
        return isinstance(other, OpLogEntry) and self.canon_key() == other.canon_key()

    def __hash__(self):
        return hash(self.canon_key())


@dataclass(eq=False)
class Reports:
    """The executor's untrusted reports.

    ``cf`` maps control-flow tag -> set of rids, ``logs`` maps object id ->
    operation log (index 0 holds sequence number 1), ``counts`` maps rid ->
    op count and ``nondet`` maps rid -> [(builtin, value), ...].
    """

    cf: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    nondet: dict = field(default_factory=dict)

    def canon_key(self):
        return (
            tuple(sorted((t, tuple(sorted(r))) for t, r in self.cf.items())),
            tuple(sorted((o, tuple(e.canon_key() for e in log)) for o, log in self.logs.items())),
            tuple(sorted(self.counts.items())),
            tuple(sorted((r, tuple((b, canon(v)) for b, v in nd)) for r, nd in self.nondet.items())),
        )

    def __eq__(self, other):
        return isinstance(other, Reports) and self.canon_key() == other.canon_key()

    def copy(self) -> "Reports":
        return Reports(
            cf={t: set(r) for t, r in self.cf.items()},
            logs={o: list(log) for o, log in self.logs.items()},
            counts=dict(self.counts),
            nondet={r: list(nd) for r, nd in self.nondet.items()},
        )

    def num_ops(self) -> int:
        return sum(len(log) for log in self.logs.values())


def check_balanced(trace: Trace) -> Optional[str]:
    """None if every rid has exactly one request followed by exactly one
    response; otherwise a description of the first violation."""
    seen_req: set[str] = set()
    seen_resp: set[str] = set()
    all_reqs = {e.rid for e in trace.events if e.kind == REQ}
    for e in trace.events:
        if e.kind == REQ:
            if e.rid in seen_req:
                return f"duplicate rid {e.rid}"
            seen_req.add(e.rid)
        elif e.kind == RESP:
            if e.rid in seen_resp:
                return f"duplicate rid {e.rid}" if e.rid in seen_req else f"duplicate response {e.rid}"
            if e.rid not in seen_req:
                if e.rid in all_reqs:
                    return f"response before its request {e.rid}"
                return f"response without request {e.rid}"
            seen_resp.add(e.rid)
        else:
            return f"unknown event kind {e.kind!r}"
    missing = seen_req - seen_resp
    if missing:
        return f"request without response {min(missing, key=rid_sort_key)}"
    return None


# --- serialization ---------------------------------------------------------

def _encode_item(v) -> str:
    if isinstance(v, Query):
        return "q:" + base64.b64encode(v.to_json().encode("utf-8")).decode("ascii")
    return encode(v)


def _decode_item(tok: str):
    if tok.startswith("q:"):
        return Query.from_json(base64.b64decode(tok[2:], validate=True).decode("utf-8"))
    return decode(tok)


def format_trace(trace: Trace) -> str:
    lines = []
    for e in trace.events:
        if e.kind == REQ:
            parts = [REQ, encode_name(e.rid), encode_name(e.handler)]
            parts += [f"{encode_name(k)}={encode(v)}" for k, v in e.params]
            lines.append(" ".join(parts))
        else:
            body = base64.b64encode(e.body).decode("ascii")
            lines.append(f"{RESP} {encode_name(e.rid)} {body}".rstrip(" "))
    return "".join(line + "\n" for line in lines)


def parse_trace(text: str) -> Trace:
    events = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        toks = line.split(" ")
        try:
            if toks[0] == REQ and len(toks) >= 3:
                params = []
                for t in toks[3:]:
                    k, eq, v = t.partition("=")
                    if not eq:
                        raise ValueError(f"bad param {t!r}")
                    params.append((decode_name(k), decode(v)))
                events.append(Event(REQ, decode_name(toks[1]), decode_name(toks[2]), tuple(params)))
            elif toks[0] == RESP and len(toks) in (2, 3):
                body = base64.b64decode(toks[2], validate=True) if len(toks) == 3 else b""
                events.append(Event(RESP, decode_name(toks[1]), body=body))
            else:
                raise ValueError(f"unrecognized line {line!r}")
        except (ValueError, UnicodeDecodeError) as e:
            raise FormatError(str(e), n) from None
    return Trace(events)


def format_reports(r: Reports) -> str:
    lines = []
    for tag in sorted(r.cf):
        rids = " ".join(encode_name(x) for x in sorted(r.cf[tag], key=rid_sort_key))
        lines.append(f"CF {tag:016x} {rids}".rstrip(" "))
    for rid in sorted(r.counts, key=rid_sort_key):
        lines.append(f"M {encode_name(rid)} {r.counts[rid]}")
    for obj in sorted(r.logs):
        for seq, e in enumerate(r.logs[obj], start=1):
            parts = ["OP", encode_name(obj), str(seq), encode_name(e.rid), str(e.opnum),
                     encode_name(e.optype)] + [_encode_item(v) for v in e.contents]
            lines.append(" ".join(parts))
    for rid in sorted(r.nondet, key=rid_sort_key):
        for idx, (builtin, value) in enumerate(r.nondet[rid], start=1):
            lines.append(f"ND {encode_name(rid)} {idx} {encode_name(builtin)} {encode(value)}")
    return "".join(line + "\n" for line in lines)


def parse_reports(text: str) -> Reports:
    r = Reports()
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        toks = line.split(" ")
        try:
            kind = toks[0]
            if kind == "CF" and len(toks) >= 2:
                tag = int(toks[1], 16)
                if tag in r.cf:
                    raise ValueError(f"duplicate tag {toks[1]}")
                r.cf[tag] = {decode_name(t) for t in toks[2:]}
            elif kind == "M" and len(toks) == 3:
                rid = decode_name(toks[1])
                if rid in r.counts:
                    raise ValueError(f"duplicate count for {rid}")
                r.counts[rid] = int(toks[2])
            elif kind == "OP" and len(toks) >= 6:
                obj = decode_name(toks[1])
                log = r.logs.setdefault(obj, [])
                if int(toks[2]) != len(log) + 1:
                    raise ValueError(f"sequence numbers of {obj} must be dense and ascending")
                log.append(OpLogEntry(decode_name(toks[3]), int(toks[4]), decode_name(toks[5]),
                                      tuple(_decode_item(t) for t in toks[6:])))
            elif kind == "ND" and len(toks) == 5:
                rid = decode_name(toks[1])
                nd = r.nondet.setdefault(rid, [])
                if int(toks[2]) != len(nd) + 1:
                    raise ValueError(f"nondet indices of {rid} must be dense and ascending")
                nd.append((decode_name(toks[3]), decode(toks[4])))
            else:
                raise ValueError(f"unrecognized line {line!r}")
        except (ValueError, KeyError, UnicodeDecodeError) as e:
            raise FormatError(str(e), n) from None
    return r
