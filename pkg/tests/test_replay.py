import pytest
from hypothesis import given, settings, strategies as st

from execaudit.decision import Reason, Reject
from execaudit.executor import Arrival, Workload, serve
from execaudit.lang import digest_of, parse_program
from execaudit.replay import (
    AuditConfig, Multi, check_nondet, collapse, prepare, reexec_group, sim_op, ssco_audit,
)
from execaudit.tamper import tamper
from execaudit.trace import OpLogEntry, Reports, Trace, request, response
from execaudit.workloads import preset, random_instance


def audit(program, trace, reports, **kw):
    return ssco_audit(program, trace, reports, AuditConfig(check_normalization=True, **kw))


def test_cross_presets(cross_preset):
    name, (prog, trace, reports) = cross_preset
    d = audit(prog, trace, reports)
    if name == "fig4c":
        assert d.accepted
    else:
        assert d.reason == Reason.CYCLE


def test_collapse():
    assert collapse([1, 1, 1]) == 1
    assert isinstance(collapse([1, True]), Multi)
    assert isinstance(collapse([None, ""]), Multi)
    assert collapse(["a"]) == "a"


def test_sim_op_reads_previous_write():
    prog, trace, reports = preset("fig4c")
    ctx = prepare(prog, trace, reports)
    assert sim_op(ctx, "reg:B", 3, "RegisterRead", ()) == 1
    assert sim_op(ctx, "reg:A", 3, "RegisterRead", ()) == 1


def test_read_without_prior_write_rejects():
    prog = parse_program('handler h\nregread x "A"\noutput x\n')
    trace = Trace([request("r1", "h"), response("r1", b"")])
    reports = Reports(cf={digest_of("h", ()): {"r1"}}, counts={"r1": 1},
                      logs={"reg:A": [OpLogEntry("r1", 1, "RegisterRead", ())]})
    assert audit(prog, trace, reports).reason == Reason.NO_PRIOR_WRITE


PARAM_PROG = """\
handler h
input a a
input b b
binop x add a b
binop y mul x 0
binop z add y 7
output z
output x
"""


def test_collapse_after_recombination():
    prog = parse_program(PARAM_PROG)
    arrivals = [Arrival(f"r{i}", "h", (("a", i), ("b", 1))) for i in range(4)]
    trace, reports = serve(prog, Workload(arrivals, concurrency=4, seed=1))
    assert len(reports.cf) == 1
    d = audit(prog, trace, reports)
    assert d.accepted
    [g] = d.stats
    assert g.size == 4
    # inputs run per request; y = x * 0 collapses, so only z and its output are univalent
    assert g.instructions == 7
    assert g.univalent == 2
    assert g.evals == 4 + 4 + 4 + 4 + 1 + 1 + 4


def test_group_of_one_matches_singletons():
    inst = random_instance(5, 30, 4)
    a = audit(inst.program, inst.trace, inst.reports)
    b = audit(inst.program, inst.trace, inst.reports, singleton_groups=True)
    assert a.accepted and b.accepted
    assert sum(g.instructions for g in b.stats) >= sum(g.instructions for g in a.stats)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 60), st.integers(1, 8), st.integers(1, 5))
def test_group_size_independence(seed, n, p, cap):
    inst = random_instance(seed, n, p)
    full = audit(inst.program, inst.trace, inst.reports)
    capped = audit(inst.program, inst.trace, inst.reports, group_cap=cap)
    single = audit(inst.program, inst.trace, inst.reports, singleton_groups=True)
    nodedup = audit(inst.program, inst.trace, inst.reports, dedup=False)
    assert full.accepted and capped.accepted and single.accepted and nodedup.accepted
    assert all(g.tag_match for g in full.stats)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["flip-response-byte", "rewrite-write-value",
                                                "swap-log-entries", "drop-log-entry", "insert-spurious-op",
                                                "inflate-M", "deflate-M", "perturb-nondet-time"]))
def test_decision_independent_of_grouping_on_tampered(seed, mutation):
    inst = random_instance(seed, 12, 3)
    try:
        t2, r2 = tamper(inst.trace, inst.reports, mutation, seed)
    except ValueError:
        return
    grouped = audit(inst.program, t2, r2)
    single = audit(inst.program, t2, r2, singleton_groups=True)
    assert grouped.accepted == single.accepted


def test_duplicate_rid_in_second_group_is_harmless():
    inst = random_instance(8, 20, 4)
    rid = sorted(inst.reports.cf[max(inst.reports.cf)])[0]
    r3 = inst.reports.copy()
    r3.cf[12345] = {rid}
    assert audit(inst.program, inst.trace, r3).accepted


def test_rid_missing_from_groups():
    prog, trace, reports = preset("fig4c")
    r2 = reports.copy()
    tag = next(t for t, rids in r2.cf.items() if "r1" in rids)
    del r2.cf[tag]
    assert audit(prog, trace, r2).reason == Reason.OUTPUT_MISMATCH
    r3 = reports.copy()
    r3.cf[tag] = r3.cf[tag] | {"ghost"}
    assert audit(prog, trace, r3).reason == Reason.OUTPUT_MISMATCH


def test_mixed_handlers_in_group():
    prog, trace, reports = preset("fig4c")
    r2 = reports.copy()
    r2.cf = {1: {"r0"}, 2: {"r1", "r2"}}
    assert audit(prog, trace, r2).reason == Reason.DIVERGENCE


def test_check_nondet():
    check_nondet({})
    check_nondet({"r1": [("time", 5), ("time", 5)]})
    with pytest.raises(Reject) as e:
        check_nondet({"r1": [("time", 5), ("time", 4)]})
    assert e.value.reason == Reason.NONDET_NONMONOTONIC


TIME_PROG = "handler h\ntime a\ntime b\nbinop d sub b a\nbinop z mul d 0\noutput z\n"


def test_nondet_checks():
    prog = parse_program(TIME_PROG)
    trace, reports = serve(prog, Workload([Arrival("r0", "h"), Arrival("r1", "h")], concurrency=2, seed=3))
    assert audit(prog, trace, reports).accepted
    _, bad = tamper(trace, reports, "perturb-nondet-time", 0)
    assert audit(prog, trace, bad).reason == Reason.NONDET_NONMONOTONIC
    short = reports.copy()
    short.nondet["r0"] = short.nondet["r0"][:1]
    assert audit(prog, trace, short).reason == Reason.NONDET_MISMATCH
    extra = reports.copy()
    extra.nondet["r0"] = extra.nondet["r0"] + [("time", 10**12)]
    assert audit(prog, trace, extra).reason == Reason.NONDET_MISMATCH


def test_op_count_checks():
    prog, trace, reports = preset("fig4c")
    _, infl = tamper(trace, reports, "inflate-M", 0, target="r1")
    d = audit(prog, trace, infl)
    assert not d.accepted
    # M=3 but only two ops logged: rejected before replay
    assert d.reason == Reason.LOG_MISSING_OP
    r2 = reports.copy()
    r2.counts["r1"] = 1
    r2.logs["reg:B"] = [e for e in r2.logs["reg:B"] if e.rid != "r1"]
    assert audit(prog, trace, r2).reason == Reason.OP_NOT_IN_MAP


def test_shortfall():
    prog = parse_program('handler h\nregwrite "A" 1\noutput 1\n')
    trace = Trace([request("r1", "h"), response("r1", b"1")])
    reports = Reports(cf={digest_of("h", ()): {"r1"}}, counts={"r1": 2},
                      logs={"reg:A": [OpLogEntry("r1", 1, "RegisterWrite", (1,)),
                                      OpLogEntry("r1", 2, "RegisterWrite", (1,))]})
    assert audit(prog, trace, reports).reason == Reason.OP_COUNT_SHORTFALL


def test_rewrite_is_op_mismatch():
    prog, trace, reports = preset("fig4c")
    _, bad = tamper(trace, reports, "rewrite-write-value", 0, target="r2")
    assert audit(prog, trace, bad).reason == Reason.OP_MISMATCH


def test_flip_is_output_mismatch():
    prog, trace, reports = preset("fig4c")
    t2, _ = tamper(trace, reports, "flip-response-byte", 7)
    assert audit(prog, t2, reports).reason == Reason.OUTPUT_MISMATCH


def test_move_is_divergence():
    prog = parse_program("handler h\ninput a a\njz a 3\noutput 1\nhalt\noutput 0\n")
    arrivals = [Arrival(f"r{i}", "h", (("a", i % 2),)) for i in range(4)]
    trace, reports = serve(prog, Workload(arrivals, concurrency=2))
    assert audit(prog, trace, reports).accepted
    _, moved = tamper(trace, reports, "move-rid-across-cf-groups", 0)
    assert audit(prog, trace, moved).reason == Reason.DIVERGENCE


def test_unbalanced_and_trap():
    prog, trace, reports = preset("fig4c")
    assert audit(prog, Trace(trace.events[:-1]), reports).reason == Reason.UNBALANCED
    bad_prog = parse_program(CROSS_TRAP)
    assert audit(bad_prog, trace, reports).reason == Reason.TRAP


CROSS_TRAP = """\
handler init
regwrite "A" 0
regwrite "B" 0
halt
handler w_then_r_AB
regwrite "A" 1
regread x "B"
binop y add x "s"
output y
handler w_then_r_BA
regwrite "B" 1
regread x "A"
output x
"""


def test_parallel_groups_same_result():
    inst = random_instance(21, 80, 6)
    seq = audit(inst.program, inst.trace, inst.reports)
    par = audit(inst.program, inst.trace, inst.reports, parallel_groups=4)
    assert seq.accepted and par.accepted
    assert [g.evals for g in seq.stats] == [g.evals for g in par.stats]
    t2, _ = tamper(inst.trace, inst.reports, "flip-response-byte", 1)
    assert str(audit(inst.program, t2, inst.reports, parallel_groups=4)) == str(audit(inst.program, t2, inst.reports))


def test_reexec_group_outputs():
    prog, trace, reports = preset("fig4c")
    ctx = prepare(prog, trace, reports)
    out, stats = reexec_group(ctx, ["r1"], 0)
    assert out == {"r1": b"1"}
    assert stats.size == 1
