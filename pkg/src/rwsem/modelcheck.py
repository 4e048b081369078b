"""Exhaustive interleaving exploration of reader-writer protocols.

Every instruction of every thread is one atomic step.  ``explore`` walks the
full reachable graph depth first over canonical states and checks:

* SAFETY: at most one writer in the critical section and never a writer
  together with readers; semaphore invariants; the protocol's declared
  value domains (semaphore caps, variable bounds, counter differences).
* DEADLOCK: no thread can move but some thread has not finished.
* STARVATION (looping threads only): a reachable cycle during which a writer
  never moves and sits in a semaphore queue at every state.
* OVERTAKING (finite iterations only): a reader that began its entry while a
  writer was already in its entry phase reaches the critical section before
  that writer does.

Exploration order is fixed (thread id ascending, RANDOM fan-out in queue
order), so reports and witnesses are reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from rwsem.protocols import (
    READER,
    WRITER,
    Add,
    Branch,
    Compiled,
    CsBegin,
    CsEnd,
    End,
    Instruction,
    ProtocolDef,
    Signal,
    Store,
    Wait,
    holds,
    parse_instruction,
)
from rwsem.semaphores import FIFO, ContractViolation, Outcome, SemState, WakePolicy, sim_signal, sim_wait

LOOP = None
DEFAULT_MAX_STATES = 10_000_000


class Check(enum.Enum):
    SAFETY = "safety"
    DEADLOCK = "deadlock"
    STARVATION = "starvation"
    OVERTAKING = "overtaking"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CheckConfig:
    protocol: ProtocolDef
    readers: int = 2
    writers: int = 1
    iterations: int | None = 1  # None (LOOP) repeats forever
    policy: WakePolicy = FIFO
    max_states: int = DEFAULT_MAX_STATES
    checks: frozenset[Check] = frozenset({Check.SAFETY, Check.DEADLOCK})

    def __post_init__(self):
        if self.readers < 0 or self.writers < 0 or self.readers + self.writers < 1:
            raise ConfigError("need at least one thread")
        if self.max_states < 1:
            raise ConfigError("max_states must be >= 1")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations must be >= 1 or LOOP")
        if Check.STARVATION in self.checks and self.iterations is not None:
            raise ConfigError("starvation check needs looping threads")
        if Check.OVERTAKING in self.checks and self.iterations is None:
            raise ConfigError("overtaking check needs finite iterations")

    @property
    def threads(self) -> int:
        return self.readers + self.writers

    def role(self, t: int) -> str:
        return READER if t < self.readers else WRITER

    def thread_name(self, t: int) -> str:
        return f"R{t}" if t < self.readers else f"W{t - self.readers}"


DONE = -1


@dataclass(frozen=True, slots=True)
class GlobalState:
    pcs: tuple[int, ...]          # DONE once the thread has finished
    iters: tuple[int, ...]
    vars: tuple[int, ...]
    sems: tuple[SemState, ...]
    cs_readers: frozenset[int] = frozenset()
    cs_writers: frozenset[int] = frozenset()
    pending: frozenset[int] = frozenset()            # writers inside their entry phase
    late: tuple[frozenset[int], ...] = ()            # per reader: writers it arrived behind

    def queued(self) -> set[int]:
        return {t for s in self.sems for t in s.queue}


@dataclass(frozen=True)
class Step:
    thread: int
    name: str
    instruction: Instruction
    woken: str | None = None

    def __str__(self):
        line = f"{self.name} {self.instruction}"
        return line + (f"  # wakes {self.woken}" if self.woken else "")


@dataclass(frozen=True)
class Witness:
    steps: tuple[Step, ...]
    cycle_start: int | None = None   # starvation witnesses: index where the cycle begins
    detail: str = ""

    def to_text(self) -> str:
        lines = []
        for i, step in enumerate(self.steps):
            if i == self.cycle_start:
                lines.append("-- cycle --")
            lines.append(str(step))
        if self.cycle_start == len(self.steps):
            lines.append("-- cycle --")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        out = {"steps": [str(s) for s in self.steps]}
        if self.cycle_start is not None:
            out["cycle_start"] = self.cycle_start
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class CheckReport:
    config: CheckConfig
    states_explored: int = 0
    transitions_explored: int = 0
    safety_violations: list[Witness] = field(default_factory=list)
    deadlocks: list[Witness] = field(default_factory=list)
    starvation_cycles: list[Witness] = field(default_factory=list)
    overtaking_violations: list[Witness] = field(default_factory=list)
    truncated: bool = False

    @property
    def clean(self) -> bool:
        return not (self.safety_violations or self.deadlocks or self.starvation_cycles or self.overtaking_violations)

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "protocol": cfg.protocol.label,
            "readers": cfg.readers,
            "writers": cfg.writers,
            "iterations": "loop" if cfg.iterations is None else cfg.iterations,
            "policy": str(cfg.policy),
            "checks": sorted(c.value for c in cfg.checks),
            "states_explored": self.states_explored,
            "transitions_explored": self.transitions_explored,
            "safety_violations": [w.to_json() for w in self.safety_violations],
            "deadlocks": [w.to_json() for w in self.deadlocks],
            "starvation_cycles": [w.to_json() for w in self.starvation_cycles],
            "overtaking_violations": [w.to_json() for w in self.overtaking_violations],
            "truncated": self.truncated,
        }


class Model:
    """Transition system for one configuration."""

    def __init__(self, cfg: CheckConfig):
        self.cfg = cfg
        p = cfg.protocol
        self.code: list[Compiled] = [p.compiled(cfg.role(t)) for t in range(cfg.threads)]
        self.names = [cfg.thread_name(t) for t in range(cfg.threads)]
        self.is_reader = [t < cfg.readers for t in range(cfg.threads)]
        self.sem_index = {n: i for i, (n, _) in enumerate(p.sems)}
        self.var_index = {n: i for i, (n, _) in enumerate(p.vars)}
        self.var_names = p.var_names()
        self.track_overtaking = Check.OVERTAKING in cfg.checks
        self.relative = [(self.var_index[a], self.var_index[b]) for a, b in p.relative]
        self.caps = [(self.sem_index[n], c) for n, c in p.sem_caps.items()]
        self.bounds = [
            (self.var_index[n], lo, cfg.readers if hi is None else hi) for n, (lo, hi) in p.var_bounds.items()
        ]

    def initial(self) -> GlobalState:
        p, cfg = self.cfg.protocol, self.cfg
        return GlobalState(
            pcs=(0,) * cfg.threads,
            iters=(0,) * cfg.threads,
            vars=tuple(v for _, v in p.vars),
            sems=tuple(SemState(n, v, (), cfg.policy) for n, v in p.sems),
            late=(frozenset(),) * cfg.threads if self.track_overtaking else (),
        )

    def enabled(self, s: GlobalState) -> list[tuple[int, Instruction]]:
        queued = s.queued()
        return [
            (t, self.code[t].code[pc])
            for t, pc in enumerate(s.pcs)
            if pc != DONE and t not in queued
        ]

    def apply(self, s: GlobalState, t: int) -> list[tuple[GlobalState, Step, bool]]:
        """Successors of ``t`` taking its next step.

        Returns ``(state, step, overtakes)`` triples; more than one only when
        a RANDOM signal hands its permit to one of several waiters.
        """
        pc = s.pcs[t]
        if pc == DONE or t in s.queued():
            raise ContractViolation(f"thread {self.names[t]} is not enabled")
        code = self.code[t]
        ins = code.code[pc]
        name = self.names[t]
        pcs = list(s.pcs)
        pcs[t] = pc + 1
        pending, late = s.pending, s.late
        overtakes = False
        if self.track_overtaking and pc == 0:
            if self.is_reader[t]:
                late = _set_at(late, t, pending)
            else:
                pending = pending | {t}

        if isinstance(ins, Wait):
            k = self.sem_index[ins.sem]
            sem, outcome = sim_wait(s.sems[k], t)
            if outcome is Outcome.BLOCKED:
                pcs[t] = pc
            st = replace(s, pcs=tuple(pcs), sems=_set_at(s.sems, k, sem), pending=pending, late=late)
            return [(st, Step(t, name, ins), False)]

        if isinstance(ins, Signal):
            k = self.sem_index[ins.sem]
            out = []
            for sem, woken in sim_signal(s.sems[k]):
                p2 = list(pcs)
                if woken is not None:
                    p2[woken] += 1   # handoff: the woken thread is past its wait
                st = replace(s, pcs=tuple(p2), sems=_set_at(s.sems, k, sem), pending=pending, late=late)
                out.append((st, Step(t, name, ins, None if woken is None else self.names[woken]), False))
            return out

        vars_ = s.vars
        cs_r, cs_w = s.cs_readers, s.cs_writers
        iters = s.iters
        if isinstance(ins, Add):
            k = self.var_index[ins.var]
            vars_ = _set_at(vars_, k, vars_[k] + ins.delta)
        elif isinstance(ins, Store):
            vars_ = _set_at(vars_, self.var_index[ins.var], ins.value)
        elif isinstance(ins, Branch):
            if holds(ins.cond, dict(zip(self.var_names, vars_))):
                pcs[t] = code.targets[pc]
        elif isinstance(ins, CsBegin):
            if self.is_reader[t]:
                cs_r = cs_r | {t}
                if self.track_overtaking:
                    overtakes = bool(late[t] & pending)
                    late = _set_at(late, t, frozenset())
            else:
                cs_w = cs_w | {t}
                if self.track_overtaking:
                    pending = pending - {t}
                    late = tuple(f - {t} for f in late)
        elif isinstance(ins, CsEnd):
            cs_r, cs_w = cs_r - {t}, cs_w - {t}
        elif isinstance(ins, End):
            if self.cfg.iterations is None:
                pcs[t] = 0
            else:
                n = s.iters[t] + 1
                iters = _set_at(iters, t, n)
                pcs[t] = 0 if n < self.cfg.iterations else DONE
        st = GlobalState(tuple(pcs), iters, vars_, s.sems, cs_r, cs_w, pending, late)
        return [(st, Step(t, name, ins), overtakes)]

    def canonicalize(self, s: GlobalState) -> tuple:
        vars_ = s.vars
        if self.relative:
            v = list(vars_)
            for a, b in self.relative:
                v[a], v[b] = v[a] - v[b], 0
            vars_ = tuple(v)
        return (
            s.pcs, s.iters, vars_,
            tuple((sem.value, sem.queue) for sem in s.sems),
            s.cs_readers, s.cs_writers, s.pending, s.late,
        )

    def safety_problems(self, s: GlobalState) -> list[str]:
        problems = []
        if len(s.cs_writers) > 1:
            problems.append(f"writers {sorted(s.cs_writers)} share the critical section")
        if s.cs_writers and s.cs_readers:
            problems.append("writer and readers share the critical section")
        for sem in s.sems:
            problems += sem.check()
        for k, cap in self.caps:
            if s.sems[k].value > cap:
                problems.append(f"{s.sems[k].name} = {s.sems[k].value} exceeds {cap}")
        for k, lo, hi in self.bounds:
            if not lo <= s.vars[k] <= hi:
                problems.append(f"{self.var_names[k]} = {s.vars[k]} outside [{lo}, {hi}]")
        for a, b in self.relative:
            d = s.vars[a] - s.vars[b]
            if not 0 <= d <= self.cfg.readers:
                problems.append(f"{self.var_names[a]} - {self.var_names[b]} = {d} outside [0, {self.cfg.readers}]")
        return problems


def _set_at(tup: tuple, i: int, value) -> tuple:
    return tup[:i] + (value,) + tup[i + 1:]


def initial_state(cfg: CheckConfig) -> GlobalState:
    return Model(cfg).initial()


def enabled(cfg: CheckConfig, s: GlobalState) -> list[tuple[int, Instruction]]:
    return Model(cfg).enabled(s)


def apply(cfg: CheckConfig, s: GlobalState, t: int) -> list[GlobalState]:
    return [st for st, _, _ in Model(cfg).apply(s, t)]


def canonicalize(cfg: CheckConfig, s: GlobalState) -> tuple:
    return Model(cfg).canonicalize(s)


def replay(cfg: CheckConfig, steps) -> GlobalState:
    """Re-execute a witness from the initial state.

    Raises :class:`ContractViolation` if some step is not enabled, names a
    different instruction than the thread would execute, or wakes a thread
    the policy could not have picked.
    """
    m = Model(cfg)
    s = m.initial()
    for step in steps:
        t = m.names.index(step.name)
        nxt = m.code[t].code[s.pcs[t]] if s.pcs[t] != DONE else None
        if nxt != step.instruction:
            raise ContractViolation(f"replay: {step.name} would execute {nxt}, witness says {step.instruction}")
        for st, done, _ in m.apply(s, t):
            if done.woken == step.woken:
                s = st
                break
        else:
            raise ContractViolation(f"replay: no successor of {step} wakes {step.woken}")
    return s


def parse_witness(text: str) -> Witness:
    steps, cycle_start = [], None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "-- cycle --":
            cycle_start = len(steps)
            continue
        body, _, comment = line.partition("#")
        name, ins = body.strip().split(" ", 1)
        woken = comment.split()[-1] if comment.strip() else None
        steps.append(Step(-1, name, parse_instruction(ins), woken))
    return Witness(tuple(steps), cycle_start)


def explore(cfg: CheckConfig) -> CheckReport:
    m = Model(cfg)
    report = CheckReport(cfg)
    checks = cfg.checks
    want_cycles = Check.STARVATION in checks

    init = m.initial()
    init_key = m.canonicalize(init)
    parent: dict[tuple, tuple[tuple, Step] | None] = {init_key: None}
    edges: dict[tuple, list[tuple[tuple, Step]]] = {}
    blocked_writers: dict[tuple, frozenset[int]] = {}
    stack = [(init, init_key)]

    def trace(key, extra=()):
        steps = []
        while parent[key] is not None:
            key, step = parent[key]
            steps.append(step)
        steps.reverse()
        return tuple(steps) + tuple(extra)

    def visit(s, key):
        if Check.SAFETY in checks:
            problems = m.safety_problems(s)
            if problems:
                report.safety_violations.append(Witness(trace(key), detail="; ".join(problems)))
        if want_cycles:
            q = s.queued()
            blocked_writers[key] = frozenset(t for t in q if not m.is_reader[t])

    visit(init, init_key)
    while stack:
        s, key = stack.pop()
        moves = m.enabled(s)
        if not moves:
            if Check.DEADLOCK in checks and any(pc != DONE for pc in s.pcs):
                stuck = ", ".join(f"{m.names[t]} on {sem.name}" for sem in s.sems for t in sem.queue)
                report.deadlocks.append(Witness(trace(key), detail=f"blocked: {stuck}"))
            continue
        fresh = []
        out_edges = [] if want_cycles else None
        for t, _ in moves:
            for st, step, overtakes in m.apply(s, t):
                report.transitions_explored += 1
                k2 = m.canonicalize(st)
                if overtakes:
                    report.overtaking_violations.append(Witness(trace(key, (step,)), detail=f"{step.name} overtook a pending writer"))
                if out_edges is not None:
                    out_edges.append((k2, step))
                if k2 in parent:
                    continue
                if len(parent) >= cfg.max_states:
                    report.truncated = True
                    continue
                parent[k2] = (key, step)
                visit(st, k2)
                fresh.append((st, k2))
        if out_edges is not None:
            edges[key] = out_edges
        stack.extend(reversed(fresh))

    report.states_explored = len(parent)
    if want_cycles:
        for w in range(cfg.readers, cfg.threads):
            cycle = _blocked_cycle(edges, blocked_writers, w)
            if cycle is not None:
                entry, steps = cycle
                stem = trace(entry)
                report.starvation_cycles.append(
                    Witness(stem + steps, cycle_start=len(stem), detail=f"{m.names[w]} stays blocked")
                )
    return report


def _blocked_cycle(edges, blocked, w):
    """A closed walk on which writer ``w`` is queued at every state.

    Among the strongly connected components of the "w is blocked" subgraph,
    the one in which the most distinct threads move is chosen (first found
    on ties), and the walk passes through one step of each of them.  For a
    reader-preference lock this yields readers taking turns in the critical
    section rather than one reader parked inside it.
    Returns ``(entry key, steps)`` or None.
    """
    nodes = [k for k, ws in blocked.items() if w in ws]
    inside = set(nodes)
    succ = {k: [(k2, st) for k2, st in edges.get(k, ()) if k2 in inside] for k in nodes}
    best = None
    for comp in _sccs(nodes, succ):
        members = set(comp)
        internal = [(u, v, st) for u in comp for v, st in succ[u] if v in members]
        if not internal:
            continue
        movers: dict[int, tuple] = {}
        for u, v, st in internal:
            movers.setdefault(st.thread, (u, v, st))
        if best is None or len(movers) > len(best[1]):
            best = (members, movers)
    if best is None:
        return None
    members, movers = best
    chosen = [movers[t] for t in sorted(movers)]
    start = cur = chosen[0][0]
    steps: list[Step] = []
    for u, v, st in chosen:
        steps += _path(succ, members, cur, u)
        steps.append(st)
        cur = v
    steps += _path(succ, members, cur, start)
    return start, tuple(steps)


def _path(succ, members, src, dst) -> list[Step]:
    if src == dst:
        return []
    prev = {src: None}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v, st in succ[u]:
                if v in members and v not in prev:
                    prev[v] = (u, st)
                    if v == dst:
                        out = []
                        while prev[v] is not None:
                            v, st2 = prev[v]
                            out.append(st2)
                        return out[::-1]
                    nxt.append(v)
        frontier = nxt
    raise AssertionError("nodes of one component must be mutually reachable")


def _sccs(nodes, succ):
    """Tarjan's algorithm, iterative; components in completion order."""
    index: dict = {}
    low: dict = {}
    on_stack: set = set()
    stack: list = []
    out = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            u, it = work[-1]
            for v, _ in it:
                if v not in index:
                    index[v] = low[v] = counter
                    counter += 1
                    stack.append(v)
                    on_stack.add(v)
                    work.append((v, iter(succ[v])))
                    break
                if v in on_stack:
                    low[u] = min(low[u], index[v])
            else:
                work.pop()
                if work:
                    parent_node = work[-1][0]
                    low[parent_node] = min(low[parent_node], low[u])
                if low[u] == index[u]:
                    comp = []
                    while True:
                        x = stack.pop()
                        on_stack.discard(x)
                        comp.append(x)
                        if x == u:
                            break
                    out.append(comp[::-1])
    return out


def find_writer_starvation(cfg: CheckConfig) -> Witness | None:
    cfg = replace(cfg, checks=cfg.checks | {Check.STARVATION})
    cycles = explore(cfg).starvation_cycles
    return cycles[0] if cycles else None


def check_overtaking(cfg: CheckConfig) -> list[Witness]:
    cfg = replace(cfg, checks=cfg.checks | {Check.OVERTAKING})
    return explore(cfg).overtaking_violations
