"""Run the four locks on one shared workload and print throughput and wait counts as CSV."""

import argparse
import csv
import sys

from rwsem.protocols import build_protocol
from rwsem.semaphores import WakePolicy
from rwsem.stress import BenchConfig, WatchdogTimeout, compare, run_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--readers", type=int, default=4)
    ap.add_argument("--writers", type=int, default=1)
    ap.add_argument("--iterations", type=int, default=10_000)
    ap.add_argument("--cs-spin", type=int, default=0)
    ap.add_argument("--think-spin", type=int, default=0)
    ap.add_argument("--policy", default="fifo")
    ap.add_argument("--watchdog", type=float, default=60.0)
    args = ap.parse_args()

    policy = WakePolicy.parse(args.policy)
    protocols = [build_protocol("naive", args.readers), *(build_protocol(k) for k in ("classic", "fair", "fastfair"))]
    cfgs = [BenchConfig(p, args.readers, args.writers, args.iterations, cs_spin=args.cs_spin,
                        think_spin=args.think_spin, policy=policy, watchdog=args.watchdog) for p in protocols]
    if args.writers > 1 and args.readers > 1:
        # naive deadlocks with two writers splitting the room; run it alone to show the hang
        try:
            run_bench(cfgs[0])
        except WatchdogTimeout as exc:
            print(f"# {cfgs[0].protocol.label}: {exc}", file=sys.stderr)
        cfgs = cfgs[1:]
    rows = compare(cfgs)
    out = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    out.writeheader()
    out.writerows(rows)


if __name__ == "__main__":
    main()
