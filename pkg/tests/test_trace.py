import pytest
from hypothesis import given, settings, strategies as st

from execaudit.objects import Query
from execaudit.trace import (
    FormatError, OpLogEntry, Reports, Trace, check_balanced, format_reports, format_trace,
    parse_reports, parse_trace, request, response,
)
from execaudit.workloads import random_instance


def test_balanced():
    ok = Trace([request("a", "h"), request("b", "h"), response("b", b"x"), response("a", b"")])
    assert check_balanced(ok) is None
    assert check_balanced(Trace([])) is None


@pytest.mark.parametrize("events,msg", [
    ([request("a", "h"), request("a", "h"), response("a", b"")], "duplicate rid a"),
    ([response("a", b""), request("a", "h")], "response before its request a"),
    ([response("z", b"")], "response without request z"),
    ([request("a", "h")], "request without response a"),
    ([request("a", "h"), response("a", b""), response("a", b"")], "duplicate"),
])
def test_unbalanced(events, msg):
    assert check_balanced(Trace(events)).startswith(msg)


names = st.text(min_size=1, max_size=6)
scal = st.one_of(st.none(), st.booleans(), st.integers(-2**63, 2**63 - 1), st.text(max_size=5))


@given(st.lists(st.tuples(names, names, st.dictionaries(names, scal, max_size=3), st.binary(max_size=8)),
                max_size=5, unique_by=lambda t: t[0]))
def test_trace_roundtrip(reqs):
    events = [request(r, h, p) for r, h, p, _ in reqs] + [response(r, b) for r, _, _, b in reqs]
    t = Trace(events)
    assert parse_trace(format_trace(t)) == t


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_reports_roundtrip_on_recordings(seed):
    inst = random_instance(seed, 8, 3)
    text = format_reports(inst.reports)
    assert parse_reports(text) == inst.reports
    assert format_reports(parse_reports(text)) == text


def test_reports_with_queries_and_nondet():
    r = Reports(cf={0xabc: {"r1", "r2"}}, counts={"r1": 1},
                logs={"db": [OpLogEntry("r1", 1, "DBOp", (Query("delete", "t", pk=3),))]},
                nondet={"r1": [("time", 5), ("time", 7)]})
    assert parse_reports(format_reports(r)) == r


@pytest.mark.parametrize("text", [
    "OP kv 2 r1 1 KvGet s:YQ==\n",
    "M r1 x\n",
    "CF zz r1\n",
    "ND r1 1 time\n",
    "BOGUS\n",
    "M r1 1\nM r1 2\n",
])
def test_reports_format_errors(text):
    with pytest.raises(FormatError):
        parse_reports(text)


def test_trace_format_errors():
    with pytest.raises(FormatError):
        parse_trace("REQ r1\n")
    with pytest.raises(FormatError):
        parse_trace("RESP r1 !!!\n")
