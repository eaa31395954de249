"""Replay work with and without read deduplication on a read-heavy workload."""

import argparse

from execaudit.experiments import measure_dedup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--readers", type=int, default=100)
    ap.add_argument("--writers", type=int, default=8)
    ap.add_argument("--group-cap", type=int, default=20)
    ap.add_argument("--compute", type=int, default=200, help="arithmetic steps per reader")
    ap.add_argument("--concurrency", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    r = measure_dedup(args.readers, args.writers, args.group_cap, args.compute,
                      args.concurrency, args.seed)
    print(f"groups                {r.group_sizes}")
    print(f"online instructions   {r.online_instructions}")
    print(f"replay evaluations    {r.replay_evals}  ({r.eval_ratio:.3f}x)")
    print(f"univalent fraction    {r.univalent_fraction:.3f}")
    print(f"select fraction       {r.select_fraction:.3f}")
    print(f"db queries issued     {r.queries_with_dedup} with dedup, "
          f"{r.queries_without_dedup} without ({r.query_ratio:.3f}x)")
    print(f"decisions             {r.decision_with} / {r.decision_without}")


if __name__ == "__main__":
    main()
