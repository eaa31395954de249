"""Time the graph checks over growing synthetic workloads and fit a line.

    python scripts/scaling.py --repeats 5 --csv scaling.csv
"""

import argparse
import csv

from execaudit.experiments import DEFAULT_SIZES, measure_scaling


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=list(DEFAULT_SIZES),
                    help="request counts per workload")
    ap.add_argument("--ops", type=int, default=3, help="logged ops per request")
    ap.add_argument("--concurrency", type=int, default=4)
    ap.add_argument("--objects", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="write (units, seconds) rows here")
    args = ap.parse_args()

    res = measure_scaling(args.sizes, args.ops, args.concurrency, args.objects,
                          args.repeats, args.seed)
    print(f"{'units':>10} {'seconds':>10} {'us/unit':>9}")
    for u, t in res.points:
        print(f"{u:>10} {t:>10.4f} {t / u * 1e6:>9.3f}")
    print(f"slope={res.slope * 1e6:.3f} us/unit  intercept={res.intercept * 1e3:.2f} ms  "
          f"R^2={res.r2:.4f}  cost ratio={res.cost_ratio:.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["units", "seconds"])
            w.writerows(res.points)


if __name__ == "__main__":
    main()
