"""Reader-writer protocols expressed as data.

A protocol is a set of semaphore and variable declarations plus one small
program per role.  The same :class:`ProtocolDef` drives the model checker,
the runtime :class:`RWLock` interpreter and the symbolic operation counter,
so the three can never drift apart.

Each instruction is one atomic step.  Compound pseudocode such as
``if (++ctr)==1 then Wait wrt`` is split into ``add``, ``if ... goto`` and
``wait``; the split is safe because every such line runs under a mutex.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Mapping

from rwsem.semaphores import FIFO, ContractViolation, RuntimeSemaphore, WakePolicy

READER = "reader"
WRITER = "writer"
ROLES = (READER, WRITER)
ENTER = "enter"
EXIT = "exit"
PHASES = (ENTER, EXIT)
UNCONTENDED = "uncontended"
BEST = "best"
WORST = "worst"
SCENARIOS = (UNCONTENDED, BEST, WORST)
KINDS = ("naive", "classic", "fair", "fastfair")

COUNTER_BITS = 64
_MASK = (1 << COUNTER_BITS) - 1


class ProtocolError(ValueError):
    """Malformed protocol or invalid protocol parameter."""


# -- instructions -----------------------------------------------------------

@dataclass(frozen=True)
class Wait:
    sem: str

    def __str__(self):
        return f"wait {self.sem}"


@dataclass(frozen=True)
class Signal:
    sem: str

    def __str__(self):
        return f"signal {self.sem}"


@dataclass(frozen=True)
class Add:
    var: str
    delta: int = 1

    def __str__(self):
        return f"add {self.var} {self.delta:+d}"


@dataclass(frozen=True)
class Store:
    var: str
    value: int

    def __str__(self):
        return f"store {self.var} {self.value}"


@dataclass(frozen=True)
class Eq:
    """``left == right`` where ``right`` is a variable name or a constant."""

    left: str
    right: str | int

    def __str__(self):
        return f"{self.left} == {self.right}"


@dataclass(frozen=True)
class Branch:
    """Jump to ``target`` when every atom holds; no atoms means always jump."""

    cond: tuple[Eq, ...]
    target: str

    def __str__(self):
        if not self.cond:
            return f"goto {self.target}"
        return "if " + " && ".join(map(str, self.cond)) + f" goto {self.target}"


@dataclass(frozen=True)
class Label:
    name: str

    def __str__(self):
        return f"{self.name}:"


@dataclass(frozen=True)
class CsBegin:
    def __str__(self):
        return "cs_begin"


@dataclass(frozen=True)
class CsEnd:
    def __str__(self):
        return "cs_end"


@dataclass(frozen=True)
class End:
    def __str__(self):
        return "end"


CS_BEGIN = CsBegin()
CS_END = CsEnd()
END = End()

Instruction = Wait | Signal | Add | Store | Branch | Label | CsBegin | CsEnd | End


def goto(target: str) -> Branch:
    return Branch((), target)


def when(target: str, *atoms: tuple[str, str | int]) -> Branch:
    return Branch(tuple(Eq(a, b) for a, b in atoms), target)


@dataclass(frozen=True)
class Compiled:
    """A program with labels removed and branch targets resolved to indices."""

    code: tuple[Instruction, ...]
    targets: tuple[int, ...]  # per instruction; -1 unless it is a Branch
    cs_begin: int
    cs_end: int


def compile_program(program: tuple[Instruction, ...]) -> Compiled:
    code: list[Instruction] = []
    labels: dict[str, int] = {}
    for ins in program:
        if isinstance(ins, Label):
            if ins.name in labels:
                raise ProtocolError(f"duplicate label {ins.name!r}")
            labels[ins.name] = len(code)
        else:
            code.append(ins)
    targets = []
    for ins in code:
        if isinstance(ins, Branch):
            if ins.target not in labels:
                raise ProtocolError(f"undefined label {ins.target!r}")
            targets.append(labels[ins.target])
        else:
            targets.append(-1)
    begins = [i for i, ins in enumerate(code) if isinstance(ins, CsBegin)]
    ends = [i for i, ins in enumerate(code) if isinstance(ins, CsEnd)]
    if len(begins) != 1 or len(ends) != 1:
        raise ProtocolError("program needs exactly one cs_begin and one cs_end")
    if begins[0] > ends[0]:
        raise ProtocolError("cs_begin must precede cs_end")
    if any(t >= len(code) for t in targets):
        raise ProtocolError("label at end of program has nothing to jump to")
    return Compiled(tuple(code), tuple(targets), begins[0], ends[0])


# -- protocol definitions ---------------------------------------------------

@dataclass(frozen=True)
class ProtocolDef:
    name: str
    sems: tuple[tuple[str, int], ...]
    vars: tuple[tuple[str, int], ...]
    reader_program: tuple[Instruction, ...]
    writer_program: tuple[Instruction, ...]
    params: Mapping[str, int] = field(default_factory=dict)
    # counter pairs only ever incremented and compared with each other; the
    # checker may store them as a difference
    relative: tuple[tuple[str, str], ...] = ()
    # domain invariants asserted during exploration; a bound of None means
    # "the number of reader threads"
    sem_caps: Mapping[str, int] = field(default_factory=dict)
    var_bounds: Mapping[str, tuple[int, int | None]] = field(default_factory=dict)
    variant: str = ""

    @property
    def label(self) -> str:
        base = self.name
        if "R" in self.params:
            base += f"({self.params['R']})"
        return f"{base}[{self.variant}]" if self.variant else base

    def program(self, role: str) -> tuple[Instruction, ...]:
        if role == READER:
            return self.reader_program
        if role == WRITER:
            return self.writer_program
        raise ValueError(f"unknown role {role!r}")

    def compiled(self, role: str) -> Compiled:
        return compile_program(self.program(role))

    def sem_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.sems)

    def var_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.vars)


def validate(p: ProtocolDef) -> None:
    """Raise :class:`ProtocolError` unless ``p`` is well formed."""
    sems = p.sem_names()
    names = p.var_names()
    if len(set(sems)) != len(sems) or len(set(names)) != len(names):
        raise ProtocolError("duplicate declaration")
    if any(v < 0 for _, v in p.sems):
        raise ProtocolError("semaphores start non-negative")
    for role in ROLES:
        compile_program(p.program(role))
        for ins in p.program(role):
            if isinstance(ins, (Wait, Signal)) and ins.sem not in sems:
                raise ProtocolError(f"{role}: undeclared semaphore {ins.sem!r}")
            if isinstance(ins, (Add, Store)) and ins.var not in names:
                raise ProtocolError(f"{role}: undeclared variable {ins.var!r}")
            if isinstance(ins, Branch):
                for atom in ins.cond:
                    if atom.left not in names or (isinstance(atom.right, str) and atom.right not in names):
                        raise ProtocolError(f"{role}: undeclared variable in {atom}")
    _check_relative(p)


def _check_relative(p: ProtocolDef) -> None:
    # shift invariance needs: only Add on these vars, and they only meet
    # each other in equality atoms
    for a, b in p.relative:
        pair = {a, b}
        for role in ROLES:
            for ins in p.program(role):
                if isinstance(ins, Store) and ins.var in pair:
                    raise ProtocolError(f"relative counter {ins.var} is stored to")
                if isinstance(ins, Branch):
                    for atom in ins.cond:
                        sides = {atom.left, atom.right}
                        if sides & pair and sides != pair:
                            raise ProtocolError(f"relative counter compared outside its pair: {atom}")


def _naive(capacity: int) -> ProtocolDef:
    reader = (Wait("room"), CS_BEGIN, CS_END, Signal("room"), END)
    writer = (
        *[Wait("room")] * capacity,
        CS_BEGIN, CS_END,
        *[Signal("room")] * capacity,
        END,
    )
    return ProtocolDef(
        "naive", (("room", capacity),), (), reader, writer,
        params={"R": capacity}, sem_caps={"room": capacity},
    )


def _classic_reader_entry() -> tuple[Instruction, ...]:
    return (
        Wait("mx"),
        Add("ctr", 1),
        when("first", ("ctr", 1)),
        goto("entered"),
        Label("first"),
        Wait("wrt"),
        Label("entered"),
        Signal("mx"),
    )


def _classic_reader_exit() -> tuple[Instruction, ...]:
    return (
        Wait("mx"),
        Add("ctr", -1),
        when("last", ("ctr", 0)),
        goto("leave"),
        Label("last"),
        Signal("wrt"),
        Label("leave"),
        Signal("mx"),
        END,
    )


def _classic() -> ProtocolDef:
    reader = (*_classic_reader_entry(), CS_BEGIN, CS_END, *_classic_reader_exit())
    writer = (Wait("wrt"), CS_BEGIN, CS_END, Signal("wrt"), END)
    return ProtocolDef(
        "classic", (("mx", 1), ("wrt", 1)), (("ctr", 0),), reader, writer,
        sem_caps={"mx": 1, "wrt": 1}, var_bounds={"ctr": (0, None)},
    )


def _fair() -> ProtocolDef:
    reader = (
        Wait("in"), *_classic_reader_entry(), Signal("in"),
        CS_BEGIN, CS_END,
        *_classic_reader_exit(),
    )
    writer = (Wait("in"), Wait("wrt"), CS_BEGIN, CS_END, Signal("wrt"), Signal("in"), END)
    return ProtocolDef(
        "fair", (("in", 1), ("mx", 1), ("wrt", 1)), (("ctr", 0),), reader, writer,
        sem_caps={"in": 1, "mx": 1, "wrt": 1}, var_bounds={"ctr": (0, None)},
    )


def _fastfair() -> ProtocolDef:
    reader = (
        Wait("in"), Add("ctrin", 1), Signal("in"),
        CS_BEGIN, CS_END,
        Wait("out"), Add("ctrout", 1),
        when("last", ("wait", 1), ("ctrin", "ctrout")),
        Signal("out"),
        END,
        Label("last"),
        Signal("wrt"),
        Signal("out"),
        END,
    )
    writer = (
        Wait("in"), Wait("out"),
        when("direct", ("ctrin", "ctrout")),
        Store("wait", 1),
        Signal("out"),
        Wait("wrt"),
        Store("wait", 0),
        goto("cs"),
        Label("direct"),
        Signal("out"),
        Label("cs"),
        CS_BEGIN, CS_END,
        Signal("in"),
        END,
    )
    return ProtocolDef(
        "fastfair",
        (("in", 1), ("out", 1), ("wrt", 0)),
        (("ctrin", 0), ("ctrout", 0), ("wait", 0)),
        reader, writer,
        relative=(("ctrin", "ctrout"),),
        sem_caps={"in": 1, "out": 1, "wrt": 1},
        var_bounds={"wait": (0, 1)},
    )


def build_protocol(kind: str, capacity: int | None = None) -> ProtocolDef:
    """Build one of ``naive``, ``classic``, ``fair`` or ``fastfair``.

    ``capacity`` is the naive protocol's reader capacity R and is rejected
    for the other kinds.
    """
    if kind == "naive":
        if capacity is None or capacity < 1:
            raise ProtocolError("naive protocol needs capacity R >= 1")
        p = _naive(capacity)
    elif kind in ("classic", "fair", "fastfair"):
        if capacity is not None:
            raise ProtocolError(f"{kind} takes no capacity parameter")
        p = {"classic": _classic, "fair": _fair, "fastfair": _fastfair}[kind]()
    else:
        raise ProtocolError(f"unknown protocol {kind!r}; expected one of {', '.join(KINDS)}")
    validate(p)
    return p


def all_protocols(capacity: int = 2) -> list[ProtocolDef]:
    return [build_protocol("naive", capacity), *(build_protocol(k) for k in KINDS[1:])]


# -- mutants ----------------------------------------------------------------

def _drop(program: tuple[Instruction, ...], index: int) -> tuple[Instruction, ...]:
    return program[:index] + program[index + 1:]


def _with_sem(p: ProtocolDef, name: str, value: int) -> tuple[tuple[str, int], ...]:
    return tuple((n, value if n == name else v) for n, v in p.sems)


def _mutant_fastfair_wrt1() -> ProtocolDef:
    p = build_protocol("fastfair")
    return replace(p, sems=_with_sem(p, "wrt", 1), variant="wrt-init-1")


def _mutant_fastfair_no_signal_wrt() -> ProtocolDef:
    p = build_protocol("fastfair")
    prog = p.reader_program
    return replace(p, reader_program=_drop(prog, prog.index(Signal("wrt"))), variant="reader-no-signal-wrt")


def _mutant_classic_no_entry_signal_mx() -> ProtocolDef:
    p = build_protocol("classic")
    prog = p.reader_program
    return replace(p, reader_program=_drop(prog, prog.index(Signal("mx"))), variant="reader-no-entry-signal-mx")


def _mutant_fair_writer_no_signal_in() -> ProtocolDef:
    p = build_protocol("fair")
    prog = p.writer_program
    return replace(p, writer_program=_drop(prog, prog.index(Signal("in"))), variant="writer-no-signal-in")


MUTANTS: dict[str, Callable[[], ProtocolDef]] = {
    "fastfair-wrt-init-1": _mutant_fastfair_wrt1,
    "fastfair-reader-no-signal-wrt": _mutant_fastfair_no_signal_wrt,
    "classic-reader-no-entry-signal-mx": _mutant_classic_no_entry_signal_mx,
    "fair-writer-no-signal-in": _mutant_fair_writer_no_signal_in,
}


def mutant(name: str) -> ProtocolDef:
    p = MUTANTS[name]()
    validate(p)
    return p


# -- text form --------------------------------------------------------------

def render_instruction(ins: Instruction) -> str:
    return str(ins)


def to_text(p: ProtocolDef) -> str:
    lines = [f"protocol {p.name}"]
    if p.variant:
        lines.append(f"variant {p.variant}")
    lines += [f"param {k} {v}" for k, v in sorted(p.params.items())]
    lines += [f"sem {n} {v}" for n, v in p.sems]
    lines += [f"var {n} {v}" for n, v in p.vars]
    lines += [f"relative {a} {b}" for a, b in p.relative]
    lines += [f"cap {n} {v}" for n, v in p.sem_caps.items()]
    for n, (lo, hi) in p.var_bounds.items():
        lines.append(f"bound {n} {lo} {'readers' if hi is None else hi}")
    for role in ROLES:
        lines.append(f"[{role}]")
        for ins in p.program(role):
            lines.append(str(ins) if isinstance(ins, Label) else f"  {ins}")
    return "\n".join(lines) + "\n"


def _operand(tok: str) -> str | int:
    try:
        return int(tok)
    except ValueError:
        return tok


def parse_instruction(text: str) -> Instruction:
    words = text.split()
    if not words:
        raise ProtocolError("empty instruction")
    head = words[0]
    if len(words) == 1 and head.endswith(":"):
        return Label(head[:-1])
    match words:
        case ["wait", sem]:
            return Wait(sem)
        case ["signal", sem]:
            return Signal(sem)
        case ["add", var, delta]:
            return Add(var, int(delta))
        case ["store", var, value]:
            return Store(var, int(value))
        case ["goto", target]:
            return goto(target)
        case ["cs_begin"]:
            return CS_BEGIN
        case ["cs_end"]:
            return CS_END
        case ["end"]:
            return END
        case ["if", *rest] if len(rest) >= 5 and rest[-2] == "goto":
            atoms = []
            for chunk in " ".join(rest[:-2]).split("&&"):
                left, eq, right = chunk.split()
                if eq != "==":
                    raise ProtocolError(f"bad condition {chunk!r}")
                atoms.append(Eq(left, _operand(right)))
            return Branch(tuple(atoms), rest[-1])
    raise ProtocolError(f"cannot parse instruction {text!r}")


def from_text(text: str) -> ProtocolDef:
    fields: dict = {"sems": [], "vars": [], "params": {}, "relative": [], "sem_caps": {}, "var_bounds": {}}
    programs: dict[str, list[Instruction]] = {READER: [], WRITER: []}
    section = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in programs:
                raise ProtocolError(f"unknown section {section!r}")
            continue
        if section is not None:
            programs[section].append(parse_instruction(line))
            continue
        key, *args = line.split()
        if key == "protocol":
            fields["name"] = args[0]
        elif key == "variant":
            fields["variant"] = args[0]
        elif key == "param":
            fields["params"][args[0]] = int(args[1])
        elif key == "sem":
            fields["sems"].append((args[0], int(args[1])))
        elif key == "var":
            fields["vars"].append((args[0], int(args[1])))
        elif key == "relative":
            fields["relative"].append((args[0], args[1]))
        elif key == "cap":
            fields["sem_caps"][args[0]] = int(args[1])
        elif key == "bound":
            fields["var_bounds"][args[0]] = (int(args[1]), None if args[2] == "readers" else int(args[2]))
        else:
            raise ProtocolError(f"unknown header line {line!r}")
    p = ProtocolDef(
        name=fields["name"],
        sems=tuple(fields["sems"]),
        vars=tuple(fields["vars"]),
        reader_program=tuple(programs[READER]),
        writer_program=tuple(programs[WRITER]),
        params=fields["params"],
        relative=tuple(fields["relative"]),
        sem_caps=fields["sem_caps"],
        var_bounds=fields["var_bounds"],
        variant=fields.get("variant", ""),
    )
    validate(p)
    return p


# -- symbolic operation counts ---------------------------------------------

def holds(cond: tuple[Eq, ...], env: Mapping[str, int]) -> bool:
    return all(env[a.left] == (env[a.right] if isinstance(a.right, str) else a.right) for a in cond)


def _segment(c: Compiled, phase: str) -> int:
    return 0 if phase == ENTER else c.cs_end


def _walk_concrete(c: Compiled, pc: int, env: dict[str, int]) -> tuple[list[tuple[str, str]], int]:
    """Run one phase single-threaded, mutating ``env``; returns (ops, next pc)."""
    ops: list[tuple[str, str]] = []
    while True:
        ins = c.code[pc]
        if isinstance(ins, CsBegin):
            return ops, pc + 1
        if isinstance(ins, End):
            return ops, pc
        if isinstance(ins, Wait):
            ops.append(("WAIT", ins.sem))
        elif isinstance(ins, Signal):
            ops.append(("SIGNAL", ins.sem))
        elif isinstance(ins, Add):
            env[ins.var] += ins.delta
        elif isinstance(ins, Store):
            env[ins.var] = ins.value
        elif isinstance(ins, Branch) and holds(ins.cond, env):
            pc = c.targets[pc]
            continue
        pc += 1


def _all_paths(c: Compiled, pc: int) -> Iterator[list[tuple[str, str]]]:
    """Every op sequence through a phase, branches taken both ways."""

    def go(pc: int, ops: list, seen: frozenset) -> Iterator[list]:
        while True:
            if pc in seen:
                raise ProtocolError("cycle inside a lock phase")
            seen = seen | {pc}
            ins = c.code[pc]
            if isinstance(ins, (CsBegin, End)):
                yield ops
                return
            if isinstance(ins, Wait):
                ops = ops + [("WAIT", ins.sem)]
            elif isinstance(ins, Signal):
                ops = ops + [("SIGNAL", ins.sem)]
            elif isinstance(ins, Branch):
                if ins.cond:
                    yield from go(pc + 1, ops, seen)
                pc = c.targets[pc]
                continue
            pc += 1

    yield from go(pc, [], frozenset())


def symbolic_trace(p: ProtocolDef, role: str, phase: str, scenario: str = UNCONTENDED) -> list[tuple[str, str]]:
    """Semaphore operations executed by one call on the resolved path.

    ``uncontended`` runs the role alone from the initial state (for exit,
    after its own enter).  ``best`` and ``worst`` pick the path with the
    fewest / most WAITs over every branch outcome, ties broken by total
    operation count and then by enumeration order (fall-through first).
    For readers, ``best`` is the path taken when another reader is already
    inside, i.e. the steady-state cost of a reader.
    """
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    c = p.compiled(role)
    if scenario == UNCONTENDED:
        env = dict(p.vars)
        ops, pc = _walk_concrete(c, 0, env)
        if phase == ENTER:
            return ops
        ops, _ = _walk_concrete(c, pc, env)
        return ops
    if scenario not in (BEST, WORST):
        raise ValueError(f"unknown scenario {scenario!r}")
    paths = list(_all_paths(c, _segment(c, phase)))

    def key(ops):
        return (sum(op == "WAIT" for op, _ in ops), len(ops))

    pick = min if scenario == BEST else max
    return pick(paths, key=key)


def sem_wait_counts(p: ProtocolDef, role: str, phase: str, scenario: str = UNCONTENDED) -> int:
    return sum(op == "WAIT" for op, _ in symbolic_trace(p, role, phase, scenario))


def count_table(protocols: list[ProtocolDef] | None = None) -> list[dict]:
    """WAIT/SIGNAL counts for every protocol, role and phase."""
    rows = []
    for p in protocols or all_protocols():
        for role in ROLES:
            for phase in PHASES:
                row = {"protocol": p.label, "role": role, "phase": phase}
                for sc in SCENARIOS:
                    ops = symbolic_trace(p, role, phase, sc)
                    row[f"waits_{sc}"] = sum(op == "WAIT" for op, _ in ops)
                    row[f"signals_{sc}"] = sum(op == "SIGNAL" for op, _ in ops)
                rows.append(row)
    return rows


# -- runtime interpreter ----------------------------------------------------

SemaphoreFactory = Callable[[str, int], RuntimeSemaphore]


def policy_factory(policy: WakePolicy = FIFO) -> SemaphoreFactory:
    """Semaphores sharing one policy; RANDOM seeds are derived per semaphore."""
    counter = iter(range(1 << 30))

    def make(name: str, value: int) -> RuntimeSemaphore:
        pol = policy
        if policy.seed is not None:
            pol = WakePolicy(policy.kind, policy.seed * 1000003 + next(counter))
        return RuntimeSemaphore(value, pol, name)

    return make


@dataclass
class CallProbe:
    role: str
    phase: str
    ops: list[tuple[str, str]] = field(default_factory=list)

    @property
    def waits(self) -> int:
        return sum(op == "WAIT" for op, _ in self.ops)

    @property
    def signals(self) -> int:
        return sum(op == "SIGNAL" for op, _ in self.ops)


class RWLock:
    """Runtime reader-writer lock that interprets a :class:`ProtocolDef`.

    ``reader_enter``/``writer_enter`` run the role's program up to and
    including ``cs_begin``; the caller's critical region runs between enter
    and exit.  Shared variables are updated under one internal lock, which
    makes every ``add``/``store``/``if`` a sequentially consistent atomic
    step, matching the model checker.  Counters wrap at 64 bits.
    """

    def __init__(self, protocol: ProtocolDef, policy: WakePolicy = FIFO, factory: SemaphoreFactory | None = None):
        validate(protocol)
        self.protocol = protocol
        factory = factory or policy_factory(policy)
        self.sems = {name: factory(name, value) for name, value in protocol.sems}
        self._vars = dict(protocol.vars)
        self._vars_lock = threading.Lock()
        self._code = {role: protocol.compiled(role) for role in ROLES}
        self._local = threading.local()
        self._tallies: list[Counter] = []
        self._tallies_lock = threading.Lock()

    def _thread(self):
        loc = self._local
        if not hasattr(loc, "tally"):
            loc.tally = Counter()
            loc.inside = {}
            loc.probe = None
            with self._tallies_lock:
                self._tallies.append(loc.tally)
        return loc

    def reader_enter(self):
        self._enter(READER)

    def reader_exit(self):
        self._exit(READER)

    def writer_enter(self):
        self._enter(WRITER)

    def writer_exit(self):
        self._exit(WRITER)

    def probe(self) -> CallProbe | None:
        """Operations performed by the calling thread's most recent call."""
        return self._thread().probe

    def totals(self) -> Counter:
        """Counts keyed by ``(role, op, sem)`` summed over all threads."""
        out: Counter = Counter()
        with self._tallies_lock:
            for t in self._tallies:
                out.update(t)
        return out

    def variables(self) -> dict[str, int]:
        with self._vars_lock:
            return dict(self._vars)

    def _enter(self, role: str):
        loc = self._thread()
        if role in loc.inside:
            raise ContractViolation(f"{role}_enter called twice without {role}_exit")
        probe = CallProbe(role, ENTER)
        loc.probe = probe
        loc.inside[role] = self._run(role, 0, probe, loc.tally)

    def _exit(self, role: str):
        loc = self._thread()
        if role not in loc.inside:
            raise ContractViolation(f"{role}_exit without matching {role}_enter")
        pc = loc.inside.pop(role)
        probe = CallProbe(role, EXIT)
        loc.probe = probe
        self._run(role, pc, probe, loc.tally)

    def _run(self, role: str, pc: int, probe: CallProbe, tally: Counter) -> int:
        c = self._code[role]
        code, targets = c.code, c.targets
        sems, env, vlock = self.sems, self._vars, self._vars_lock
        while True:
            ins = code[pc]
            match ins:
                case Wait(sem):
                    probe.ops.append(("WAIT", sem))
                    tally[role, "WAIT", sem] += 1
                    sems[sem].acquire()
                case Signal(sem):
                    probe.ops.append(("SIGNAL", sem))
                    tally[role, "SIGNAL", sem] += 1
                    sems[sem].release()
                case Add(var, delta):
                    with vlock:
                        env[var] = (env[var] + delta) & _MASK
                case Store(var, value):
                    with vlock:
                        env[var] = value
                case Branch(cond):
                    with vlock:
                        jump = holds(cond, env)
                    if jump:
                        pc = targets[pc]
                        continue
                case CsBegin():
                    return pc + 1
                case CsEnd():
                    pass
                case End():
                    return pc
            pc += 1


def make_lock(p: ProtocolDef, policy: WakePolicy = FIFO, factory: SemaphoreFactory | None = None) -> RWLock:
    return RWLock(p, policy, factory)
