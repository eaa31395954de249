import random

from hypothesis import given, settings, strategies as st

from execaudit.graph import create_time_precedence_graph
from execaudit.lang import parse_program
from execaudit.objects import DB_ID, KV_ID
from execaudit.trace import check_balanced
from execaudit.workloads import (
    PRESETS, TINY, epoch_trace, preset, random_balanced_trace, random_instance, random_program,
    read_heavy_workload, synthetic_reports, tiny_instance,
)


def test_presets_share_one_program():
    progs = {preset(n)[0].source for n in PRESETS}
    assert len(progs) == 1


def test_generated_program_roundtrips():
    gen = random_program(3)
    again = parse_program(gen.program.source)
    assert sorted(again.handlers) == sorted(gen.program.handlers)


def test_generator_is_deterministic():
    a, b = random_instance(11, 20, 3), random_instance(11, 20, 3)
    assert a.program.source == b.program.source
    assert a.trace.events == b.trace.events


def test_generator_covers_all_object_kinds():
    seen = set()
    timed = False
    for seed in range(40):
        inst = random_instance(seed, 30, 4)
        seen |= {o.split(":")[0] for o, log in inst.reports.logs.items() if log}
        timed |= any(inst.reports.nondet.values())
    assert {"reg", KV_ID, DB_ID} <= seen
    assert timed


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_tiny_instances_are_small(seed):
    inst = tiny_instance(seed)
    assert 2 <= len(inst.trace.requests()) <= 4
    assert len(inst.program.handlers) <= TINY.handlers + 1


def test_epoch_trace_edges():
    g = create_time_precedence_graph(epoch_trace(3, 4))
    assert len(g.nodes) == 12
    assert len(g.edges) == 27


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 40))
def test_random_balanced_trace(seed, n):
    t = random_balanced_trace(random.Random(seed), n)
    assert check_balanced(t) is None
    assert len(t.requests()) == n


def test_synthetic_reports_counts():
    trace, reports = synthetic_reports(50, 3, 4, 5, seed=1)
    assert len(trace.requests()) == 50
    assert reports.num_ops() == 150
    assert all(m == 3 for m in reports.counts.values())


def test_read_heavy_workload_shape():
    w = read_heavy_workload(readers=10, writers=2)
    handlers = [a.handler for a in w.arrivals]
    assert handlers.count("reader") == 10 and handlers.count("writer") == 2
