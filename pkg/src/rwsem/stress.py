"""Real-thread stress runs and benchmarks for the runtime locks.

Every run keeps an occupancy guard of its own (two counters behind a mutex,
independent of the lock under test) and counts every time a writer shares
the critical section with anyone.  Timings are measured and reported but
never judged; the semaphore operation counts are exact and are what the
tests assert on.
"""

from __future__ import annotations

import sys
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from rwsem.protocols import BEST, ENTER, EXIT, READER, WRITER, ProtocolDef, make_lock, sem_wait_counts
from rwsem.semaphores import FIFO, Policy, WakePolicy

DEFAULT_WATCHDOG = 60.0


class BenchError(RuntimeError):
    """The harness itself could not run (thread spawn failure and the like)."""


class WatchdogTimeout(RuntimeError):
    """Worker threads were still running when the watchdog expired."""


class InvalidComparison(ValueError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    protocol: ProtocolDef
    readers: int = 4
    writers: int = 1
    iterations: int | None = 10_000     # per thread; None means run for `duration`
    duration: float | None = None       # seconds
    cs_spin: int = 0
    think_spin: int = 0
    policy: WakePolicy = FIFO
    seed: int = 0
    watchdog: float = DEFAULT_WATCHDOG
    switch_interval: float | None = None  # temporarily replaces sys.getswitchinterval()

    def __post_init__(self):
        if self.readers < 0 or self.writers < 0 or self.readers + self.writers < 1:
            raise ValueError("need at least one thread")
        if (self.iterations is None) == (self.duration is None):
            raise ValueError("give exactly one of iterations or duration")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.cs_spin < 0 or self.think_spin < 0:
            raise ValueError("spin counts must be >= 0")

    def workload(self) -> tuple:
        return (self.readers, self.writers, self.iterations, self.duration,
                self.cs_spin, self.think_spin, self.policy.kind)


@dataclass(frozen=True)
class WaitStats:
    count: int = 0
    min: int = 0
    mean: float = 0.0
    max: int = 0
    p99: int = 0

    @classmethod
    def of(cls, samples: list[int]) -> "WaitStats":
        if not samples:
            return cls()
        xs = sorted(samples)
        p99 = xs[min(len(xs) - 1, max(0, -(-99 * len(xs) // 100) - 1))]
        return cls(len(xs), xs[0], sum(xs) / len(xs), xs[-1], p99)

    def to_json(self) -> dict:
        return {"min": self.min, "mean": self.mean, "max": self.max, "p99": self.p99}


@dataclass(frozen=True)
class BenchMetrics:
    protocol: str
    reader_ops: int
    writer_ops: int
    elapsed_s: float
    reader_wait_ns: WaitStats
    writer_wait_ns: WaitStats
    waits_per_semaphore: dict[str, int]
    signals_per_semaphore: dict[str, int]
    waits_by_role: dict[str, int]
    guard_violations: int
    spin_unit_ns: float
    clock_resolution_ns: float
    per_thread_ops: tuple[int, ...] = ()

    @property
    def reader_ops_per_s(self) -> float:
        return self.reader_ops / self.elapsed_s if self.elapsed_s else 0.0

    @property
    def writer_ops_per_s(self) -> float:
        return self.writer_ops / self.elapsed_s if self.elapsed_s else 0.0

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "reader_ops": self.reader_ops,
            "writer_ops": self.writer_ops,
            "reader_ops_per_s": self.reader_ops_per_s,
            "writer_ops_per_s": self.writer_ops_per_s,
            "elapsed_s": self.elapsed_s,
            "reader_wait_ns": self.reader_wait_ns.to_json(),
            "writer_wait_ns": self.writer_wait_ns.to_json(),
            "waits_per_semaphore": dict(sorted(self.waits_per_semaphore.items())),
            "signals_per_semaphore": dict(sorted(self.signals_per_semaphore.items())),
            "waits_by_role": self.waits_by_role,
            "guard_violations": self.guard_violations,
            "spin_unit_ns": self.spin_unit_ns,
            "clock_resolution_ns": self.clock_resolution_ns,
        }


class OccupancyGuard:
    def __init__(self):
        self._lock = threading.Lock()
        self.readers = 0
        self.writers = 0
        self.violations = 0

    def enter(self, role: str):
        with self._lock:
            if role == READER:
                self.readers += 1
            else:
                self.writers += 1
            if self.writers > 1 or (self.writers and self.readers):
                self.violations += 1

    def leave(self, role: str):
        with self._lock:
            if role == READER:
                self.readers -= 1
            else:
                self.writers -= 1


class NoOpLock:
    """A lock that never blocks; the guard's negative control."""

    def __init__(self, protocol=None, policy=None):
        self.protocol = protocol

    def reader_enter(self): pass
    def reader_exit(self): pass
    def writer_enter(self): pass
    def writer_exit(self): pass

    def totals(self) -> Counter:
        return Counter()


def spin(n: int) -> int:
    x = 0
    for i in range(n):
        x += i
    return x


def calibrate_spin(units: int = 20_000) -> float:
    """Nanoseconds per spin unit on this machine."""
    t0 = time.perf_counter_ns()
    spin(units)
    return (time.perf_counter_ns() - t0) / units


LockFactory = Callable[[ProtocolDef, WakePolicy], object]


def _effective_policy(cfg: BenchConfig) -> WakePolicy:
    if cfg.policy.kind is Policy.RANDOM:
        return WakePolicy(Policy.RANDOM, cfg.seed)
    return cfg.policy


def run_bench(cfg: BenchConfig, lock_factory: LockFactory = make_lock) -> BenchMetrics:
    lock = lock_factory(cfg.protocol, _effective_policy(cfg))
    guard = OccupancyGuard()
    n = cfg.readers + cfg.writers
    roles = [READER] * cfg.readers + [WRITER] * cfg.writers
    waits: list[list[int]] = [[] for _ in range(n)]
    done = [0] * n
    errors: list[BaseException] = []
    start = threading.Barrier(n + 1)
    deadline = [0.0]

    def worker(i: int):
        role = roles[i]
        enter = lock.reader_enter if role == READER else lock.writer_enter
        leave = lock.reader_exit if role == READER else lock.writer_exit
        mine = waits[i]
        clock = time.monotonic_ns
        try:
            start.wait()
            k = 0
            while True:
                if cfg.iterations is not None:
                    if k >= cfg.iterations:
                        break
                elif time.monotonic() >= deadline[0]:
                    break
                t0 = clock()
                enter()
                mine.append(clock() - t0)
                guard.enter(role)
                if cfg.cs_spin:
                    spin(cfg.cs_spin)
                guard.leave(role)
                leave()
                if cfg.think_spin:
                    spin(cfg.think_spin)
                k += 1
            done[i] = k
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    unit = calibrate_spin()
    old_interval = sys.getswitchinterval()
    if cfg.switch_interval is not None:
        sys.setswitchinterval(cfg.switch_interval)
    try:
        threads = [threading.Thread(target=worker, args=(i,), daemon=True, name=f"bench-{roles[i]}-{i}") for i in range(n)]
        try:
            for t in threads:
                t.start()
        except RuntimeError as exc:
            start.abort()
            raise BenchError(f"could not start worker threads: {exc}") from exc
        if cfg.duration is not None:
            deadline[0] = time.monotonic() + cfg.duration
        t_start = time.perf_counter()
        start.wait()
        limit = time.monotonic() + cfg.watchdog
        for t in threads:
            t.join(max(0.0, limit - time.monotonic()))
        elapsed = time.perf_counter() - t_start
        stuck = [t.name for t in threads if t.is_alive()]
        if stuck:
            raise WatchdogTimeout(f"{len(stuck)} thread(s) still running after {cfg.watchdog}s: {', '.join(stuck)}")
    finally:
        sys.setswitchinterval(old_interval)
    if errors:
        raise errors[0]

    totals = lock.totals()
    by_sem_w: Counter = Counter()
    by_sem_s: Counter = Counter()
    by_role: Counter = Counter()
    for (role, op, sem), c in totals.items():
        if op == "WAIT":
            by_sem_w[sem] += c
            by_role[role] += c
        else:
            by_sem_s[sem] += c
    for name, _ in cfg.protocol.sems:
        by_sem_w.setdefault(name, 0)
        by_sem_s.setdefault(name, 0)
    return BenchMetrics(
        protocol=cfg.protocol.label,
        reader_ops=sum(done[i] for i in range(n) if roles[i] == READER),
        writer_ops=sum(done[i] for i in range(n) if roles[i] == WRITER),
        elapsed_s=elapsed,
        reader_wait_ns=WaitStats.of([x for i in range(n) if roles[i] == READER for x in waits[i]]),
        writer_wait_ns=WaitStats.of([x for i in range(n) if roles[i] == WRITER for x in waits[i]]),
        waits_per_semaphore=dict(by_sem_w),
        signals_per_semaphore=dict(by_sem_s),
        waits_by_role={READER: by_role[READER], WRITER: by_role[WRITER]},
        guard_violations=guard.violations,
        spin_unit_ns=unit,
        clock_resolution_ns=time.get_clock_info("monotonic").resolution * 1e9,
        per_thread_ops=tuple(done),
    )


def compare(cfgs: list[BenchConfig], lock_factory: LockFactory = make_lock) -> list[dict]:
    """One row per protocol over a shared workload; observational only."""
    if not cfgs:
        raise InvalidComparison("nothing to compare")
    shape = cfgs[0].workload()
    for c in cfgs[1:]:
        if c.workload() != shape:
            raise InvalidComparison(f"{c.protocol.label} runs a different workload than {cfgs[0].protocol.label}")
    rows = []
    for c in cfgs:
        m = run_bench(c, lock_factory)
        p = c.protocol
        rows.append({
            "protocol": m.protocol,
            "reader_ops": m.reader_ops,
            "writer_ops": m.writer_ops,
            "reader_ops_per_s": round(m.reader_ops_per_s, 1),
            "writer_ops_per_s": round(m.writer_ops_per_s, 1),
            "reader_waits_per_op": round(m.waits_by_role[READER] / m.reader_ops, 4) if m.reader_ops else None,
            "model_reader_waits_per_op": sem_wait_counts(p, READER, ENTER, BEST) + sem_wait_counts(p, READER, EXIT, BEST),
            "writer_waits_per_op": round(m.waits_by_role[WRITER] / m.writer_ops, 4) if m.writer_ops else None,
            "writer_wait_mean_ns": round(m.writer_wait_ns.mean),
            "writer_wait_max_ns": m.writer_wait_ns.max,
            "guard_violations": m.guard_violations,
        })
    return rows
