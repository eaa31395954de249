"""Measurements shared by the experiment scripts and the acceptance tests."""

from __future__ import annotations

import gc
import statistics
import time
from dataclasses import dataclass, field

from .executor import run
from .graph import create_time_precedence_graph, process_op_reports
from .replay import AuditConfig, AuditTotals, ssco_audit
from .workloads import read_heavy_program, read_heavy_workload, synthetic_reports

DEFAULT_SIZES = (170, 300, 550, 1000, 1800, 3300, 6000, 11000, 17000)


@dataclass
class ScalingResult:
    points: list = field(default_factory=list)  # (X + Y + Z, seconds)
    slope: float = 0.0
    intercept: float = 0.0
    r2: float = 0.0
    cost_ratio: float = 0.0


def scaling_units(trace, reports) -> int:
    """X requests + Y logged ops + Z real-time edges."""
    x = len(trace.requests())
    z = len(create_time_precedence_graph(trace).edges)
    return x + reports.num_ops() + z


def measure_scaling(sizes=DEFAULT_SIZES, ops_per_request: int = 3, p: int = 4,
                    objects: int = 8, repeats: int = 5, seed: int = 0) -> ScalingResult:
    """Best-of-``repeats`` wall time of the graph checks per workload size;
    sizes are visited round-robin so drift hits them evenly."""
    cases = []
    for n in sizes:
        trace, reports = synthetic_reports(n, ops_per_request, p, objects, seed)
        cases.append((scaling_units(trace, reports), trace, reports))
    best = [float("inf")] * len(cases)
    enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        for _ in range(repeats):
            for i, (_, trace, reports) in enumerate(cases):
                t0 = time.perf_counter()
                process_op_reports(trace, reports)
                best[i] = min(best[i], time.perf_counter() - t0)
    finally:
        if enabled:
            gc.enable()
    res = ScalingResult(points=[(u, t) for (u, _, _), t in zip(cases, best)])
    xs = [u for u, _ in res.points]
    ys = [t for _, t in res.points]
    res.slope, res.intercept = statistics.linear_regression(xs, ys)
    res.r2 = statistics.correlation(xs, ys) ** 2
    per_unit = [t / u for u, t in res.points]
    res.cost_ratio = max(per_unit) / min(per_unit)
    return res


@dataclass
class DedupResult:
    online_instructions: int
    replay_evals: int
    univalent_fraction: float
    group_sizes: list
    queries_with_dedup: int
    queries_without_dedup: int
    db_reads: int
    select_fraction: float
    decision_with: str
    decision_without: str

    @property
    def eval_ratio(self) -> float:
        return self.replay_evals / self.online_instructions

    @property
    def query_ratio(self) -> float:
        return self.queries_with_dedup / self.queries_without_dedup


def measure_dedup(readers: int = 100, writers: int = 8, group_cap: int = 20,
                  compute: int = 200, concurrency: int = 8, seed: int = 0) -> DedupResult:
    program = read_heavy_program(compute)
    rec = run(program, read_heavy_workload(readers, writers, concurrency, seed))
    on = ssco_audit(program, rec.trace, rec.reports, AuditConfig(group_cap=group_cap))
    off = ssco_audit(program, rec.trace, rec.reports, AuditConfig(group_cap=group_cap, dedup=False))
    t_on, t_off = AuditTotals.of(on.stats), AuditTotals.of(off.stats)
    queries = [q for e in rec.reports.logs.get("db", []) for q in e.contents]
    selects = sum(1 for q in queries if q.is_read)
    return DedupResult(
        online_instructions=rec.instructions,
        replay_evals=t_on.evals,
        univalent_fraction=t_on.univalent_fraction,
        group_sizes=[g.size for g in on.stats],
        queries_with_dedup=t_on.db_issued,
        queries_without_dedup=t_off.db_issued,
        db_reads=t_on.db_reads,
        select_fraction=selects / len(queries) if queries else 0.0,
        decision_with=str(on),
        decision_without=str(off),
    )
