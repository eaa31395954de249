"""Command-line front end.

Exit status: 0 ACCEPT (or success), 1 REJECT (or INVALID), 2 usage or
input error.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from .decision import AuditDecision, Reject
from .executor import Arrival, ExecutionFault, ScheduleError, Workload, run
from .lang import ParseError, parse_program
from .oracle import (
    VALID, InstanceTooLarge, exhaustive_validity, ooo_exec, random_wellformed_schedule,
    topo_schedule,
)
from .replay import AuditConfig, prepare, ssco_audit, stats_lines
from .tamper import MUTATIONS, TamperError, tamper
from .trace import FormatError, format_reports, format_trace, parse_reports, parse_trace
from .workloads import CROSS_PROGRAM, INIT, PRESETS, GenConfig, preset, random_program

PROGRAM_FILE = "program.txt"
TRACE_FILE = "trace.txt"
REPORTS_FILE = "reports.txt"


class UsageError(Exception):
    pass


def _write_bundle(out: Path, program_text: str, trace, reports):
    out.mkdir(parents=True, exist_ok=True)
    (out / PROGRAM_FILE).write_text(program_text)
    (out / TRACE_FILE).write_text(format_trace(trace))
    (out / REPORTS_FILE).write_text(format_reports(reports))


def _load(args):
    """(program, trace, reports) from --preset, --dir or explicit paths."""
    if getattr(args, "preset", None):
        return preset(args.preset)
    d = Path(args.dir) if args.dir else None
    paths = {}
    for key, default in (("program", PROGRAM_FILE), ("trace", TRACE_FILE), ("reports", REPORTS_FILE)):
        p = getattr(args, key)
        if p is None and d is not None:
            p = d / default
        if p is None:
            raise UsageError(f"--{key} (or --dir or --preset) is required")
        paths[key] = Path(p)
    program = parse_program(paths["program"].read_text())
    trace = parse_trace(paths["trace"].read_text())
    reports = parse_reports(paths["reports"].read_text())
    return program, trace, reports


def _input_keys(handler) -> list:
    return [ins.args[1] for ins in handler.code if ins.op == "input"]


def _arrivals_for(program, requests: int, rng: random.Random, param_range: int) -> list:
    names = sorted(h for h in program.handlers if h != INIT)
    arrivals = []
    if INIT in program.handlers and requests > 0:
        arrivals.append(Arrival("r0", INIT, tuple((k, 0) for k in _input_keys(program[INIT])), 0))
    if not names and len(arrivals) < requests:
        raise UsageError("program has no handlers besides init")
    for i in range(len(arrivals), requests):
        h = rng.choice(names)
        params = tuple((k, rng.randrange(param_range)) for k in _input_keys(program[h]))
        arrivals.append(Arrival(f"r{i}", h, params, 1))
    return arrivals


def cmd_record(args) -> int:
    out = Path(args.out)
    if args.preset:
        program, trace, reports = preset(args.preset)
        _write_bundle(out, CROSS_PROGRAM, trace, reports)
        print(f"recorded preset {args.preset} to {out}")
        return 0
    if args.program:
        text = Path(args.program).read_text()
        program = parse_program(text)
    else:
        cfg = GenConfig(handlers=args.handlers)
        program = random_program(args.seed, cfg).program
        text = program.source
    rng = random.Random(args.seed)
    arrivals = _arrivals_for(program, args.requests, rng, args.param_range)
    rec = run(program, Workload(arrivals, seed=args.seed, concurrency=args.concurrency,
                                arrive_prob=args.arrive_prob))
    _write_bundle(out, text, rec.trace, rec.reports)
    print(f"recorded {len(arrivals)} requests ({rec.instructions} instructions) to {out}")
    return 0


def _print_decision(d: AuditDecision, stats: bool):
    line = f"decision={d.verdict}"
    if not d.accepted:
        line += f" reason={d.reason}"
        if d.detail:
            line += f" detail={d.detail}"
    print(line)
    if stats:
        for s in stats_lines(d):
            print(s)


def cmd_audit(args) -> int:
    program, trace, reports = _load(args)
    cfg = AuditConfig(dedup=not args.no_dedup, group_cap=args.group_cap,
                      parallel_groups=args.parallel_groups)
    d = ssco_audit(program, trace, reports, cfg)
    _print_decision(d, args.stats)
    return 0 if d.accepted else 1


def cmd_stats(args) -> int:
    args.stats = True
    return cmd_audit(args)


def cmd_tamper(args) -> int:
    program, trace, reports = _load(args)
    t2, r2 = tamper(trace, reports, args.mutation, args.seed, args.target)
    out = Path(args.out)
    _write_bundle(out, program.source, t2, r2)
    print(f"applied {args.mutation} (seed {args.seed}) to {out}")
    return 0


def cmd_oracle(args) -> int:
    program, trace, reports = _load(args)
    if args.which == "validity":
        try:
            v = exhaustive_validity(program, trace, reports)
        except InstanceTooLarge as e:
            raise UsageError(f"instance too large for exhaustive search: {e}") from None
        print(v)
        return 0 if v == VALID else 1
    try:
        ctx = prepare(program, trace, reports)
    except Reject as r:
        d = AuditDecision.from_reject(r)
        for k in range(args.schedules):
            print(f"schedule={k} {_short(d)}")
        return 1
    verdicts = []
    for k in range(args.schedules):
        seed = args.seed + k
        sched = (topo_schedule(ctx.graph, seed) if k % 2 == 0
                 else random_wellformed_schedule(ctx.graph, seed))
        d = ooo_exec(ctx, sched)
        verdicts.append(d.accepted)
        print(f"schedule={k} {_short(d)}")
    return 0 if all(verdicts) else 1


def _short(d: AuditDecision) -> str:
    return f"decision={d.verdict}" + ("" if d.accepted else f" reason={d.reason}")


def _add_inputs(p):
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--dir", help=f"directory holding {PROGRAM_FILE}, {TRACE_FILE}, {REPORTS_FILE}")
    p.add_argument("--program")
    p.add_argument("--trace")
    p.add_argument("--reports")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="execaudit", description="Record, tamper with and audit server executions.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("record", help="serve a workload and write trace + reports")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--program", help="listing to serve (default: a generated program)")
    p.add_argument("--requests", type=int, default=20)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arrive-prob", type=float, default=0.5)
    p.add_argument("--param-range", type=int, default=4)
    p.add_argument("--handlers", type=int, default=3, help="handlers in a generated program")
    p.set_defaults(fn=cmd_record)

    for name, fn, hlp in (("audit", cmd_audit, "audit a trace against reports"),
                          ("stats", cmd_stats, "audit and print replay statistics")):
        p = sub.add_parser(name, help=hlp)
        _add_inputs(p)
        p.add_argument("--no-dedup", action="store_true")
        p.add_argument("--stats", action="store_true")
        p.add_argument("--parallel-groups", type=int, default=1)
        p.add_argument("--group-cap", type=int, default=AuditConfig.group_cap)
        p.set_defaults(fn=fn)

    p = sub.add_parser("tamper", help="write a mutated copy of trace + reports")
    _add_inputs(p)
    p.add_argument("--mutation", choices=MUTATIONS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", help="rid to mutate where applicable")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_tamper)

    p = sub.add_parser("oracle", help="reference checks")
    p.add_argument("which", choices=("validity", "ooo"))
    _add_inputs(p)
    p.add_argument("--schedules", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ParseError, FormatError, ScheduleError, ExecutionFault,
            TamperError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
