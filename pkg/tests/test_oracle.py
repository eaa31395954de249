import pytest
from hypothesis import given, settings, strategies as st

from execaudit.decision import Reason
from execaudit.executor import Arrival, Workload, serve
from execaudit.lang import parse_program
from execaudit.oracle import (
    INVALID, VALID, InstanceTooLarge, exhaustive_validity, is_wellformed, ooo_audit,
    random_wellformed_schedule, respects_edges, topo_schedule, transitive_reduction,
)
from execaudit.replay import prepare, ssco_audit
from execaudit.tamper import tamper
from execaudit.trace import Trace, request, response
from execaudit.workloads import preset, random_instance, tiny_instance


def test_validity_of_presets(cross_preset):
    name, (prog, trace, reports) = cross_preset
    expected = VALID if name == "fig4c" else INVALID
    assert exhaustive_validity(prog, trace, reports) == expected


def test_validity_too_large():
    inst = random_instance(0, 10, 2)
    with pytest.raises(InstanceTooLarge):
        exhaustive_validity(inst.program, inst.trace, inst.reports)


def test_validity_flipped_response():
    prog, trace, reports = preset("fig4c")
    # "1","0" is what running r2 then r1 serially produces
    t2, _ = tamper(trace, reports, "flip-response-byte", 0, target="r2")
    assert exhaustive_validity(prog, t2, reports) == VALID
    # "0","0" needs each write to miss the other's read: no schedule does that
    t3, _ = tamper(t2, reports, "flip-response-byte", 0, target="r1")
    assert exhaustive_validity(prog, t3, reports) == INVALID


def test_validity_needs_time_values():
    prog = parse_program("handler h\ntime a\nbinop z mul a 0\noutput z\n")
    trace = Trace([request("r1", "h"), response("r1", b"0")])
    assert exhaustive_validity(prog, trace, None) == INVALID
    trace, reports = serve(prog, Workload([Arrival("r1", "h")]))
    assert exhaustive_validity(prog, trace, reports) == VALID


def test_transitive_reduction_examples():
    chain = {(1, 2), (2, 3), (1, 3)}
    assert transitive_reduction(chain) == {(1, 2), (2, 3)}
    assert transitive_reduction(set()) == set()
    diamond = {(1, 2), (1, 3), (2, 4), (3, 4), (1, 4)}
    assert transitive_reduction(diamond) == {(1, 2), (1, 3), (2, 4), (3, 4)}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 40), st.integers(1, 6), st.integers(0, 50))
def test_schedules_are_wellformed(seed, n, p, k):
    inst = random_instance(seed, n, p)
    ctx = prepare(inst.program, inst.trace, inst.reports)
    topo = topo_schedule(ctx.graph, k)
    assert is_wellformed(topo, ctx.graph) and respects_edges(topo, ctx.graph)
    inter = random_wellformed_schedule(ctx.graph, k)
    assert is_wellformed(inter, ctx.graph)


def test_is_wellformed_negative():
    prog, trace, reports = preset("fig4c")
    ctx = prepare(prog, trace, reports)
    s = topo_schedule(ctx.graph)
    assert not is_wellformed(s[:-1], ctx.graph)
    i = next(k for k in range(len(s) - 1) if s[k][0] == s[k + 1][0])
    swapped = s[:i] + [s[i + 1], s[i]] + s[i + 2:]
    assert not is_wellformed(swapped, ctx.graph)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 3))
def test_ooo_matches_grouped_on_honest(seed, k):
    inst = random_instance(seed, 25, 4)
    assert ssco_audit(inst.program, inst.trace, inst.reports).accepted
    assert ooo_audit(inst.program, inst.trace, inst.reports, seed=k).accepted
    assert ooo_audit(inst.program, inst.trace, inst.reports, seed=k, interleave=True).accepted


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["flip-response-byte", "rewrite-write-value",
                                                "swap-log-entries", "drop-log-entry", "insert-spurious-op",
                                                "inflate-M", "deflate-M", "perturb-nondet-time"]))
def test_ooo_agrees_with_grouped_on_tampered(seed, mutation):
    inst = tiny_instance(seed)
    try:
        t2, r2 = tamper(inst.trace, inst.reports, mutation, seed)
    except ValueError:
        return
    ssco = ssco_audit(inst.program, t2, r2).accepted
    for k in range(3):
        assert ooo_audit(inst.program, t2, r2, seed=k, interleave=bool(k % 2)).accepted == ssco


def test_ooo_ignores_control_flow_groups():
    prog = parse_program("handler h\ninput a a\njz a 3\noutput 1\nhalt\noutput 0\n")
    arrivals = [Arrival(f"r{i}", "h", (("a", i % 2),)) for i in range(4)]
    trace, reports = serve(prog, Workload(arrivals, concurrency=2))
    _, moved = tamper(trace, reports, "move-rid-across-cf-groups", 0)
    assert ssco_audit(prog, trace, moved).reason == Reason.DIVERGENCE
    assert ooo_audit(prog, trace, moved).accepted


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_accepted_tiny_instances_are_valid(seed):
    inst = tiny_instance(seed)
    assert ssco_audit(inst.program, inst.trace, inst.reports).accepted
    assert exhaustive_validity(inst.program, inst.trace, inst.reports) == VALID
