import pytest
from hypothesis import given, settings, strategies as st

from execaudit.executor import (
    Arrival, ExecutionFault, ExecutorConfig, ScheduleError, Workload, run, serve, TAMPERED,
)
from execaudit.lang import parse_program
from execaudit.trace import check_balanced
from execaudit.workloads import CROSS_ARRIVALS, CROSS_PROGRAM, random_instance

PROG = parse_program(CROSS_PROGRAM)


def test_explicit_schedule_interleaves():
    trace, reports = serve(PROG, Workload(CROSS_ARRIVALS, schedule=["r0"] * 4 + ["r1", "r2"] * 4))
    assert trace.responses() == {"r0": b"", "r1": b"1", "r2": b"1"}
    assert reports.counts == {"r0": 2, "r1": 2, "r2": 2}
    assert [e.rid for e in reports.logs["reg:A"]] == ["r0", "r1", "r2"]


def test_serial_schedule():
    trace, _ = serve(PROG, Workload(CROSS_ARRIVALS, schedule=["r0"] * 4 + ["r1"] * 4 + ["r2"] * 4))
    assert trace.responses() == {"r0": b"", "r1": b"0", "r2": b"1"}


@pytest.mark.parametrize("sched", [["r1"], ["r0", "r0"], ["r0"] * 3 + ["r2"]])
def test_schedule_errors(sched):
    with pytest.raises(ScheduleError):
        serve(PROG, Workload(CROSS_ARRIVALS, schedule=sched))


def test_trap_is_fault():
    prog = parse_program("handler h\noutput x\n")
    with pytest.raises(ExecutionFault):
        serve(prog, Workload([Arrival("r0", "h")], schedule=["r0", "r0"]))


def test_tampered_mode_applies_mutation():
    wl = Workload(CROSS_ARRIVALS, schedule=["r0"] * 4 + ["r1", "r2"] * 4)
    clean = run(PROG, wl)
    bad = run(PROG, wl, ExecutorConfig(mode=TAMPERED, mutation="inflate-M", seed=1))
    assert sum(bad.reports.counts.values()) == sum(clean.reports.counts.values()) + 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 40), st.integers(1, 8))
def test_recordings_are_consistent(seed, n, p):
    inst = random_instance(seed, n, p)
    assert check_balanced(inst.trace) is None
    assert len(inst.trace.requests()) == n
    r = inst.reports
    assert sum(r.counts.values()) == r.num_ops()
    assert set().union(*r.cf.values()) == set(inst.trace.requests())
    for nd in r.nondet.values():
        times = [v for _, v in nd]
        assert times == sorted(times)
    again = random_instance(seed, n, p)
    assert again.trace == inst.trace and again.reports == inst.reports
