"""Look for a writer starvation cycle in each protocol with two looping readers and print it."""

import argparse

from rwsem.modelcheck import LOOP, CheckConfig, find_writer_starvation
from rwsem.protocols import build_protocol
from rwsem.semaphores import WakePolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--policy", default="fifo")
    args = ap.parse_args()
    policy = WakePolicy.parse(args.policy)
    for kind in ("classic", "fair", "fastfair"):
        w = find_writer_starvation(CheckConfig(build_protocol(kind), 2, 1, LOOP, policy))
        print(f"== {kind} ({policy}): {'starves' if w else 'no starvation cycle'}")
        if w:
            print(w.to_text())


if __name__ == "__main__":
    main()
