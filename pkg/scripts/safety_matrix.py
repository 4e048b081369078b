"""Explore every protocol under every wake policy at small thread counts and print a table."""

import argparse
import time

from rwsem.modelcheck import CheckConfig, explore
from rwsem.protocols import all_protocols
from rwsem.semaphores import FIFO, LIFO, RANDOM


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--capacity", type=int, default=2, help="naive capacity R")
    ap.add_argument("--max-iters", type=int, default=2)
    args = ap.parse_args()

    print(f"{'protocol':<10} {'policy':<7} {'shape':<6} {'it':>2} {'states':>8} {'safety':>6} {'dead':>5} {'secs':>6}")
    for p in all_protocols(args.capacity):
        for policy in (FIFO, LIFO, RANDOM):
            for r, w in ((2, 1), (2, 2)):
                for it in range(1, args.max_iters + 1):
                    t0 = time.perf_counter()
                    rep = explore(CheckConfig(p, r, w, it, policy))
                    flag = " (truncated)" if rep.truncated else ""
                    print(f"{p.label:<10} {str(policy):<7} {r}R/{w}W  {it:>2} {rep.states_explored:>8} "
                          f"{len(rep.safety_violations):>6} {len(rep.deadlocks):>5} {time.perf_counter() - t0:>6.2f}{flag}")


if __name__ == "__main__":
    main()
