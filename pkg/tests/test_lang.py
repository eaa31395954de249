import pytest
from hypothesis import given, strategies as st

from execaudit.lang import (
    Output, ParseError, StateOp, Thread, Trap, digest_of, eval_binop, parse_program,
    run_to_next_event,
)
from execaudit.executor import OnlineState, Clock


def run_all(text, handler, params=None):
    prog = parse_program(text)
    t = Thread(prog, "r1", handler, params or {})
    state = OnlineState()
    nd = {}
    clock = Clock(100, 1, nd)
    events = []
    while not t.halted:
        events.append(run_to_next_event(t, state, clock))
    return t, events, state


def test_greet():
    src = 'handler greet\ninput name who\nconst hi "hello "\nbinop msg concat hi name\noutput msg\nhalt\n'
    t, events, _ = run_all(src, "greet", {"who": "bob"})
    assert events == [Output(b"hello bob")]


def test_branch_and_digest():
    src = "handler h\ninput x a\njz x 4\nconst y 1\njmp 5\nconst y 2\noutput y\n"
    t, ev, _ = run_all(src, "h", {"a": 0})
    assert ev[-1].body == b"2"
    assert t.digest == digest_of("h", [(1, True)])
    t2, ev2, _ = run_all(src, "h", {"a": 3})
    assert ev2[-1].body == b"1"
    assert t2.digest == digest_of("h", [(1, False), (3, True)])
    assert t.digest != t2.digest


def test_state_ops_count():
    src = ('handler h\nregwrite "A" 5\nregread x "A"\nbinop k concat "k" x\nkvset k x\n'
           'kvget y k\nbegin_txn\ndb w insert t 1 v=x\ndb s select t v eq 5\nend_txn\noutput s\n')
    t, ev, state = run_all(src, "h")
    assert [type(e) for e in ev] == [StateOp] * 5 + [Output]
    assert t.ops_issued == 5
    assert ev[-1].body == b'[[1,{"v":5}]]'
    assert sorted(state.logs) == ["db", "kv", "reg:A"]


def test_time_builtin():
    src = "handler h\ntime a\ntime b\nbinop d sub b a\noutput d\n"
    t, ev, _ = run_all(src, "h")
    assert ev == [Output(b"1")]
    assert t.nd_used == 2


@pytest.mark.parametrize("src", [
    "halt\n",
    "handler h\nfrob x\n",
    "handler h\njmp 7\n",
    "handler h\ndb x select t v eq 1\n",
    "handler h\nbegin_txn\nregread x \"A\"\nend_txn\n",
    "handler h\nbegin_txn\n",
    "handler h\nbegin_txn\njmp 3\nend_txn\nhalt\n",
    'handler h\nconst x "oops\n',
    "handler h\nhalt\nhandler h\nhalt\n",
])
def test_parse_errors(src):
    with pytest.raises(ParseError):
        parse_program(src)


@pytest.mark.parametrize("src,params", [
    ("handler h\noutput x\n", {}),
    ('handler h\nbinop x add 1 "a"\n', {}),
    ('handler h\njz "s" 0\n', {}),
    ("handler h\ninput x missing\n", {}),
    ("handler h\nregread x 3\n", {}),
])
def test_traps(src, params):
    with pytest.raises(Trap):
        run_all(src, "h", params)


def test_infinite_loop_traps():
    with pytest.raises(Trap):
        run_all("handler h\njmp 0\n", "h")


@given(st.integers(-2**63, 2**63 - 1), st.integers(-2**63, 2**63 - 1))
def test_int_ops_wrap(a, b):
    for op in ("add", "sub", "mul"):
        v = eval_binop(op, a, b)
        assert -2**63 <= v < 2**63
    assert eval_binop("lt", a, b) is (a < b)
    assert eval_binop("eq", a, b) is (a == b)
