"""Completeness and soundness fuzzing.

    python scripts/fuzz.py complete --instances 1000
    python scripts/fuzz.py sound --instances 200

``complete`` audits honest recordings and reports any REJECT.  ``sound``
applies every mutation to small instances and reports any ACCEPT of a trace
the exhaustive oracle calls INVALID, plus disagreements with the reference
one-request-at-a-time auditor.
"""

import argparse
import collections
import random
import time

from execaudit.oracle import INVALID, exhaustive_validity, ooo_audit
from execaudit.replay import ssco_audit
from execaudit.tamper import MUTATIONS, TamperError, tamper
from execaudit.workloads import random_instance, tiny_instance


def complete(args):
    rng = random.Random(args.seed)
    bad = 0
    t0 = time.perf_counter()
    for seed in range(args.seed, args.seed + args.instances):
        inst = random_instance(seed, rng.randint(1, args.max_requests), rng.randint(1, 8))
        d = ssco_audit(inst.program, inst.trace, inst.reports)
        if not d.accepted:
            bad += 1
            print(f"seed {seed}: {d}")
    print(f"{args.instances - bad}/{args.instances} accepted in {time.perf_counter() - t0:.1f}s")
    return bad


def sound(args):
    counts = collections.Counter()
    failures = 0
    for seed in range(args.seed, args.seed + args.instances):
        inst = tiny_instance(seed)
        for m in MUTATIONS:
            try:
                t2, r2 = tamper(inst.trace, inst.reports, m, seed)
            except TamperError:
                continue
            d = ssco_audit(inst.program, t2, r2)
            counts[(m, d.verdict)] += 1
            if d.accepted and exhaustive_validity(inst.program, t2, r2) == INVALID:
                failures += 1
                print(f"seed {seed} {m}: accepted an invalid trace")
            ooo = ooo_audit(inst.program, t2, r2, seed=seed)
            if ooo.accepted != d.accepted and m != "move-rid-across-cf-groups":
                failures += 1
                print(f"seed {seed} {m}: grouped {d} vs reference {ooo}")
    for m in MUTATIONS:
        print(f"{m:28} accept={counts[(m, 'ACCEPT')]:4} reject={counts[(m, 'REJECT')]:4}")
    print(f"{failures} failures")
    return failures


def main():
    ap = argparse.ArgumentParser(description="Completeness and soundness fuzzing.")
    ap.add_argument("mode", choices=("complete", "sound"))
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--max-requests", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    fn = complete if args.mode == "complete" else sound
    raise SystemExit(1 if fn(args) else 0)


if __name__ == "__main__":
    main()
