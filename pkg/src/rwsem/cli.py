"""Command-line front end: ``rwsem {list,check,ops,conform,bench,compare}``.

Exit codes: 0 clean, 2 a protocol failed (violation, starvation,
overtaking, conformance mismatch, guard hit or hang), 3 exploration
truncated, 64 usage error, 70 the environment failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from rwsem import modelcheck as mc
from rwsem.protocols import (
    BEST,
    ENTER,
    EXIT,
    KINDS,
    MUTANTS,
    PHASES,
    READER,
    ROLES,
    SCENARIOS,
    UNCONTENDED,
    ProtocolDef,
    ProtocolError,
    all_protocols,
    build_protocol,
    count_table,
    make_lock,
    mutant,
    symbolic_trace,
)
from rwsem.semaphores import Policy, WakePolicy
from rwsem.stress import BenchConfig, BenchError, InvalidComparison, WatchdogTimeout, compare, run_bench

EXIT_OK = 0
EXIT_FOUND = 2
EXIT_TRUNCATED = 3
EXIT_USAGE = 64
EXIT_SOFTWARE = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- conformance ------------------------------------------------------------

@dataclass
class ConformResult:
    protocol: str
    ok: bool
    mismatch: str = ""


def _first_divergence(expected, got) -> str | None:
    for i in range(max(len(expected), len(got))):
        e = expected[i] if i < len(expected) else None
        g = got[i] if i < len(got) else None
        if e != g:
            show = lambda op: "end of trace" if op is None else f"{op[0]} {op[1]}"
            return f"op {i}: expected {show(e)}, got {show(g)}"
    return None


def conform(protocols: list[ProtocolDef], lock_factory=make_lock) -> list[ConformResult]:
    """Compare runtime probes with :func:`symbolic_trace` on fixed schedules.

    Uncontended: one thread runs enter then exit on a fresh lock, per role.
    Best (readers only): reader A enters, reader B enters and exits while A
    is inside, then A exits; B's calls must follow the best-case path.
    """
    results = []
    for p in protocols:
        problem = None
        for role in ROLES:
            lock = lock_factory(p)
            enter = lock.reader_enter if role == READER else lock.writer_enter
            leave = lock.reader_exit if role == READER else lock.writer_exit
            for phase, call in ((ENTER, enter), (EXIT, leave)):
                call()
                diff = _first_divergence(symbolic_trace(p, role, phase, UNCONTENDED), lock.probe().ops)
                if diff:
                    problem = f"{role} {phase} ({UNCONTENDED}): {diff}"
                    break
            if problem:
                break
        if problem is None:
            lock = lock_factory(p)
            with ThreadPoolExecutor(1) as a, ThreadPoolExecutor(1) as b:
                a.submit(lock.reader_enter).result()
                for phase, call in ((ENTER, lock.reader_enter), (EXIT, lock.reader_exit)):
                    ops = b.submit(lambda c=call: (c(), lock.probe().ops)[1]).result()
                    diff = _first_divergence(symbolic_trace(p, READER, phase, BEST), ops)
                    if diff:
                        problem = f"reader {phase} ({BEST}): {diff}"
                        break
                a.submit(lock.reader_exit).result()
        results.append(ConformResult(p.label, problem is None, problem or ""))
    return results


# -- argument handling ------------------------------------------------------

def _protocol(args) -> ProtocolDef:
    if getattr(args, "mutant", None):
        return mutant(args.mutant)
    if args.protocol == "naive":
        return build_protocol("naive", 2 if args.capacity is None else args.capacity)
    if args.capacity is not None:
        raise UsageError("--capacity only applies to the naive protocol")
    return build_protocol(args.protocol)


def _policy(args) -> WakePolicy:
    return WakePolicy.parse(args.policy, args.seed if args.policy == "random" else None)


def _checks(values, loop: bool) -> frozenset:
    if not values:
        base = {mc.Check.SAFETY, mc.Check.DEADLOCK}
        if loop:
            base.add(mc.Check.STARVATION)
        return frozenset(base)
    out = set()
    for v in values:
        for part in v.split(","):
            try:
                out.add(mc.Check(part.strip().lower()))
            except ValueError:
                raise UsageError(f"unknown check {part!r}") from None
    return frozenset(out)


def _add_protocol_flags(sp, with_mutant=False):
    sp.add_argument("--protocol", choices=KINDS, default="fastfair")
    sp.add_argument("--capacity", type=int, default=None, help="naive protocol reader capacity R (default 2)")
    if with_mutant:
        sp.add_argument("--mutant", choices=sorted(MUTANTS), help="check a single-edit mutant instead")


def _add_output_flags(sp, formats=("text", "json")):
    sp.add_argument("--format", choices=formats, default="text")
    sp.add_argument("--out", metavar="PATH", help="also write the document to PATH")


def _add_workload_flags(sp):
    sp.add_argument("--readers", type=int, default=4)
    sp.add_argument("--writers", type=int, default=1)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--iters", type=int, default=None, help="iterations per thread (default 10000)")
    g.add_argument("--duration", type=float, default=None, help="seconds to run instead of a fixed count")
    sp.add_argument("--cs-spin", type=int, default=0)
    sp.add_argument("--think-spin", type=int, default=0)
    sp.add_argument("--policy", choices=[p.value for p in Policy], default="fifo")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--watchdog", type=float, default=60.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rwsem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list", help="list protocols, policies, checks and mutants")

    sp = sub.add_parser("check", help="exhaustively model check one configuration")
    _add_protocol_flags(sp, with_mutant=True)
    sp.add_argument("--readers", type=int, default=2)
    sp.add_argument("--writers", type=int, default=1)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--iters", type=int, default=1)
    g.add_argument("--loop", action="store_true", help="threads repeat forever")
    sp.add_argument("--policy", choices=[p.value for p in Policy], default="fifo")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--check", action="append", metavar="KIND",
                    help="safety, deadlock, starvation, overtaking (repeatable or comma separated)")
    sp.add_argument("--max-states", type=int, default=mc.DEFAULT_MAX_STATES)
    _add_output_flags(sp)

    sp = sub.add_parser("ops", help="semaphore operation counts")
    sp.add_argument("--table", action="store_true", help="full table for all protocols (default)")
    sp.add_argument("--protocol", choices=KINDS)
    sp.add_argument("--capacity", type=int, default=None)
    sp.add_argument("--role", choices=ROLES)
    sp.add_argument("--phase", choices=PHASES)
    sp.add_argument("--scenario", choices=SCENARIOS, default=UNCONTENDED)
    _add_output_flags(sp)

    sp = sub.add_parser("conform", help="runtime probes versus symbolic traces")
    sp.add_argument("--protocol", action="append", choices=KINDS, help="repeatable; default all four")
    sp.add_argument("--capacity", type=int, default=2)
    _add_output_flags(sp)

    sp = sub.add_parser("bench", help="run one protocol under real threads")
    _add_protocol_flags(sp)
    _add_workload_flags(sp)
    _add_output_flags(sp)

    sp = sub.add_parser("compare", help="benchmark several protocols on one workload")
    sp.add_argument("--protocols", default="fair,fastfair", help="comma separated")
    sp.add_argument("--capacity", type=int, default=None, help="naive capacity (default: --readers)")
    _add_workload_flags(sp)
    _add_output_flags(sp, formats=("text", "json", "csv"))
    return parser


# -- rendering --------------------------------------------------------------

def _table(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows:
        return "(empty)\n"
    columns = columns or list(rows[0])
    cells = [[str(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _check_text(report: mc.CheckReport) -> str:
    d = report.to_json()
    out = [
        f"protocol {d['protocol']}  readers {d['readers']}  writers {d['writers']}  "
        f"iterations {d['iterations']}  policy {d['policy']}  checks {','.join(d['checks'])}",
        f"states_explored        {report.states_explored}",
        f"transitions_explored   {report.transitions_explored}",
        f"truncated              {str(report.truncated).lower()}",
    ]
    for kind in ("safety_violations", "deadlocks", "starvation_cycles", "overtaking_violations"):
        found = getattr(report, kind)
        out.append(f"{kind:<22} {len(found)}")
    for kind in ("safety_violations", "deadlocks", "starvation_cycles", "overtaking_violations"):
        found = getattr(report, kind)
        if found:
            w = found[0]
            out.append("")
            out.append(f"first of {len(found)} {kind}" + (f" ({w.detail})" if w.detail else "") + ":")
            out.append(w.to_text().rstrip("\n"))
    return "\n".join(out) + "\n"


def _bench_text(m) -> str:
    d = m.to_json()
    out = [f"protocol {m.protocol}"]
    for k in ("reader_ops", "writer_ops", "reader_ops_per_s", "writer_ops_per_s", "elapsed_s", "guard_violations",
              "spin_unit_ns", "clock_resolution_ns"):
        v = d[k]
        out.append(f"{k:<20} {v:.3f}" if isinstance(v, float) else f"{k:<20} {v}")
    for k in ("reader_wait_ns", "writer_wait_ns"):
        s = d[k]
        out.append(f"{k:<20} min {s['min']}  mean {s['mean']:.0f}  max {s['max']}  p99 {s['p99']}")
    out.append("waits_per_semaphore  " + "  ".join(f"{k}={v}" for k, v in d["waits_per_semaphore"].items()))
    out.append("signals_per_semaphore " + "  ".join(f"{k}={v}" for k, v in d["signals_per_semaphore"].items()))
    return "\n".join(out) + "\n"


# -- commands ---------------------------------------------------------------

def _cmd_list(args):
    lines = ["protocols: " + ", ".join(KINDS) + "  (naive takes --capacity R)",
             "policies:  " + ", ".join(p.value for p in Policy),
             "checks:    " + ", ".join(c.value for c in mc.Check),
             "mutants:   " + ", ".join(sorted(MUTANTS))]
    return EXIT_OK, "\n".join(lines) + "\n"


def _cmd_check(args):
    loop = args.loop
    p = _protocol(args)
    cfg = mc.CheckConfig(
        protocol=p,
        readers=args.readers,
        writers=args.writers,
        iterations=mc.LOOP if loop else args.iters,
        policy=_policy(args),
        max_states=args.max_states,
        checks=_checks(args.check, loop),
    )
    report = mc.explore(cfg)
    doc = _json(report.to_json()) if args.format == "json" else _check_text(report)
    if not report.clean:
        return EXIT_FOUND, doc
    return (EXIT_TRUNCATED if report.truncated else EXIT_OK), doc


def _cmd_ops(args):
    if args.protocol and args.role and args.phase:
        p = build_protocol("naive", args.capacity or 2) if args.protocol == "naive" else build_protocol(args.protocol)
        ops = symbolic_trace(p, args.role, args.phase, args.scenario)
        doc = {
            "protocol": p.label, "role": args.role, "phase": args.phase, "scenario": args.scenario,
            "waits": sum(op == "WAIT" for op, _ in ops),
            "signals": sum(op == "SIGNAL" for op, _ in ops),
            "trace": [f"{op} {sem}" for op, sem in ops],
        }
        if args.format == "json":
            return EXIT_OK, _json(doc)
        return EXIT_OK, f"{doc['protocol']} {doc['role']} {doc['phase']} {doc['scenario']}: " \
                        f"waits={doc['waits']} signals={doc['signals']}\n" + "".join(f"  {t}\n" for t in doc["trace"])
    if args.protocol or args.role or args.phase:
        if not args.table:
            raise UsageError("ops needs --protocol, --role and --phase together, or --table")
    protos = all_protocols(args.capacity or 2)
    if args.protocol:
        protos = [p for p in protos if p.name == args.protocol]
    rows = count_table(protos)
    if args.format == "json":
        return EXIT_OK, _json(rows)
    return EXIT_OK, _table(rows)


def _cmd_conform(args):
    kinds = args.protocol or list(KINDS)
    protos = [build_protocol(k, args.capacity) if k == "naive" else build_protocol(k) for k in kinds]
    results = conform(protos)
    ok = all(r.ok for r in results)
    if args.format == "json":
        doc = _json([{"protocol": r.protocol, "ok": r.ok, "mismatch": r.mismatch} for r in results])
    else:
        doc = "".join(f"{r.protocol:<10} {'pass' if r.ok else 'FAIL  ' + r.mismatch}\n" for r in results)
    return (EXIT_OK if ok else EXIT_FOUND), doc


def _bench_config(args, p: ProtocolDef) -> BenchConfig:
    iters = args.iters
    if iters is None and args.duration is None:
        iters = 10_000
    return BenchConfig(
        protocol=p, readers=args.readers, writers=args.writers, iterations=iters, duration=args.duration,
        cs_spin=args.cs_spin, think_spin=args.think_spin, policy=_policy(args), seed=args.seed,
        watchdog=args.watchdog,
    )


def _cmd_bench(args):
    if args.protocol == "naive" and args.capacity is None:
        args.capacity = args.readers or 1
    m = run_bench(_bench_config(args, _protocol(args)))
    doc = _json(m.to_json()) if args.format == "json" else _bench_text(m)
    return (EXIT_OK if m.guard_violations == 0 else EXIT_FOUND), doc


def _cmd_compare(args):
    kinds = [k.strip() for k in args.protocols.split(",") if k.strip()]
    cfgs = []
    for k in kinds:
        if k not in KINDS:
            raise UsageError(f"unknown protocol {k!r}")
        p = build_protocol("naive", args.capacity or args.readers or 1) if k == "naive" else build_protocol(k)
        cfgs.append(_bench_config(args, p))
    rows = compare(cfgs)
    if args.format == "json":
        doc = _json(rows)
    elif args.format == "csv":
        doc = _csv(rows)
    else:
        doc = _table(rows)
    bad = any(r["guard_violations"] for r in rows)
    return (EXIT_FOUND if bad else EXIT_OK), doc


COMMANDS = {
    "list": _cmd_list,
    "check": _cmd_check,
    "ops": _cmd_ops,
    "conform": _cmd_conform,
    "bench": _cmd_bench,
    "compare": _cmd_compare,
}


def main(argv: list[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        code, doc = COMMANDS[args.command](args)
    except (UsageError, ProtocolError, mc.ConfigError, InvalidComparison, ValueError) as exc:
        print(f"rwsem: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WatchdogTimeout as exc:
        print(f"rwsem: {exc}", file=sys.stderr)
        return EXIT_FOUND
    except (BenchError, OSError, MemoryError) as exc:
        print(f"rwsem: runtime error: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE
    stdout.write(doc)
    if getattr(args, "out", None):
        try:
            with open(args.out, "w") as fh:
                fh.write(doc)
        except OSError as exc:
            print(f"rwsem: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_SOFTWARE
    return code


if __name__ == "__main__":
    sys.exit(main())
