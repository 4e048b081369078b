import threading
from pathlib import Path

import pytest

from rwsem.protocols import (
    BEST,
    CS_BEGIN,
    CS_END,
    ENTER,
    EXIT,
    KINDS,
    MUTANTS,
    PHASES,
    READER,
    ROLES,
    UNCONTENDED,
    WORST,
    WRITER,
    Add,
    Branch,
    Label,
    ProtocolError,
    Signal,
    Wait,
    all_protocols,
    build_protocol,
    count_table,
    from_text,
    make_lock,
    mutant,
    parse_instruction,
    sem_wait_counts,
    symbolic_trace,
    to_text,
    validate,
)
from rwsem.semaphores import ContractViolation

GOLDEN = Path(__file__).parent / "golden"


def test_fastfair_declarations():
    p = build_protocol("fastfair")
    assert dict(p.sems) == {"in": 1, "out": 1, "wrt": 0}
    assert dict(p.vars) == {"ctrin": 0, "ctrout": 0, "wait": 0}


def test_classic_declarations():
    p = build_protocol("classic")
    assert dict(p.sems) == {"mx": 1, "wrt": 1}
    assert dict(p.vars) == {"ctr": 0}


def test_fair_declarations():
    p = build_protocol("fair")
    assert dict(p.sems) == {"in": 1, "mx": 1, "wrt": 1}


def test_naive_writer_loops_capacity_times():
    p = build_protocol("naive", 3)
    prog = p.writer_program
    cs = prog.index(CS_BEGIN)
    assert prog[:cs] == (Wait("room"),) * 3
    after = prog[prog.index(CS_END) + 1:]
    assert [i for i in after if isinstance(i, Signal)] == [Signal("room")] * 3
    assert dict(p.sems) == {"room": 3}


@pytest.mark.parametrize("bad", [0, -1, None])
def test_naive_needs_positive_capacity(bad):
    with pytest.raises(ProtocolError):
        build_protocol("naive", bad)


def test_unknown_kind_and_stray_capacity():
    with pytest.raises(ProtocolError):
        build_protocol("morris")
    with pytest.raises(ProtocolError):
        build_protocol("fair", 2)


@pytest.mark.parametrize("p", all_protocols(3) + [mutant(m) for m in MUTANTS], ids=lambda p: p.label)
def test_programs_are_well_formed(p):
    validate(p)
    for role in ROLES:
        prog = p.program(role)
        assert prog.count(CS_BEGIN) == 1 and prog.count(CS_END) == 1
        assert prog.index(CS_BEGIN) < prog.index(CS_END)


@pytest.mark.parametrize("edit, msg", [
    (lambda p: p.reader_program + (Branch((), "nowhere"),), "undefined label"),
    (lambda p: p.reader_program + (Label("last"),), "duplicate label"),
    (lambda p: (Wait("ghost"),) + p.reader_program, "undeclared semaphore"),
    (lambda p: (Add("ghost"),) + p.reader_program, "undeclared variable"),
    (lambda p: p.reader_program + (CS_BEGIN,), "exactly one cs_begin"),
])
def test_validator_rejects(edit, msg):
    from dataclasses import replace
    p = build_protocol("fastfair")
    with pytest.raises(ProtocolError, match=msg):
        validate(replace(p, reader_program=edit(p)))


def test_relative_counters_must_stay_shift_invariant():
    from dataclasses import replace
    from rwsem.protocols import Store
    p = build_protocol("fastfair")
    with pytest.raises(ProtocolError):
        validate(replace(p, writer_program=(Store("ctrin", 0),) + p.writer_program))


@pytest.mark.parametrize("kind", KINDS)
def test_text_form_matches_golden_and_round_trips(kind):
    p = build_protocol(kind, 3 if kind == "naive" else None)
    text = to_text(p)
    assert text == (GOLDEN / f"{kind}.txt").read_text()
    assert from_text(text) == p


def test_instruction_parse_render_round_trip():
    for line in ["wait in", "signal wrt", "add ctr -1", "store wait 1", "goto cs",
                 "if wait == 1 && ctrin == ctrout goto last", "cs_begin", "cs_end", "end", "last:"]:
        assert str(parse_instruction(line)) == line
    with pytest.raises(ProtocolError):
        parse_instruction("jump somewhere")


# -- operation counts -------------------------------------------------------

def test_fastfair_reader_locks_once_each_way():
    p = build_protocol("fastfair")
    assert sem_wait_counts(p, READER, ENTER, UNCONTENDED) == 1
    assert sem_wait_counts(p, READER, EXIT, UNCONTENDED) == 1


def test_fair_reader_entry_costs():
    p = build_protocol("fair")
    # steady state (another reader inside): in + mx
    assert symbolic_trace(p, READER, ENTER, BEST) == [("WAIT", "in"), ("WAIT", "mx"), ("SIGNAL", "mx"), ("SIGNAL", "in")]
    # a lone reader is also the first reader, so it takes wrt as well
    assert sem_wait_counts(p, READER, ENTER, UNCONTENDED) == 3


def test_fastfair_writer_counts():
    p = build_protocol("fastfair")
    assert sem_wait_counts(p, WRITER, ENTER, UNCONTENDED) == 2
    assert sem_wait_counts(p, WRITER, ENTER, WORST) == 3
    for sc in (UNCONTENDED, BEST, WORST):
        assert sem_wait_counts(p, WRITER, EXIT, sc) == 0


@pytest.mark.parametrize("r", [1, 2, 5])
def test_naive_writer_waits_capacity_times(r):
    assert sem_wait_counts(build_protocol("naive", r), WRITER, ENTER, UNCONTENDED) == r


def test_symbolic_trace_examples():
    ff = build_protocol("fastfair")
    assert symbolic_trace(ff, READER, EXIT, UNCONTENDED) == [("WAIT", "out"), ("SIGNAL", "out")]
    assert symbolic_trace(ff, WRITER, EXIT, UNCONTENDED) == [("SIGNAL", "in")]
    assert symbolic_trace(build_protocol("fair"), WRITER, ENTER, UNCONTENDED) == [("WAIT", "in"), ("WAIT", "wrt")]
    assert symbolic_trace(ff, READER, EXIT, WORST) == [("WAIT", "out"), ("SIGNAL", "wrt"), ("SIGNAL", "out")]


# (waits enter, waits exit) per scenario, read off the programs by hand
EXPECTED_WAITS = {
    ("naive(2)", READER): {UNCONTENDED: (1, 0), BEST: (1, 0), WORST: (1, 0)},
    ("naive(2)", WRITER): {UNCONTENDED: (2, 0), BEST: (2, 0), WORST: (2, 0)},
    ("classic", READER): {UNCONTENDED: (2, 1), BEST: (1, 1), WORST: (2, 1)},
    ("classic", WRITER): {UNCONTENDED: (1, 0), BEST: (1, 0), WORST: (1, 0)},
    ("fair", READER): {UNCONTENDED: (3, 1), BEST: (2, 1), WORST: (3, 1)},
    ("fair", WRITER): {UNCONTENDED: (2, 0), BEST: (2, 0), WORST: (2, 0)},
    ("fastfair", READER): {UNCONTENDED: (1, 1), BEST: (1, 1), WORST: (1, 1)},
    ("fastfair", WRITER): {UNCONTENDED: (2, 0), BEST: (2, 0), WORST: (3, 0)},
}


def test_count_table_cells():
    got = {}
    for row in count_table():
        got.setdefault((row["protocol"], row["role"]), {})
        for sc in (UNCONTENDED, BEST, WORST):
            got[row["protocol"], row["role"]].setdefault(sc, [None, None])
            got[row["protocol"], row["role"]][sc][PHASES.index(row["phase"])] = row[f"waits_{sc}"]
    assert {k: {sc: tuple(v) for sc, v in d.items()} for k, d in got.items()} == EXPECTED_WAITS


@pytest.mark.parametrize("p", all_protocols(3), ids=lambda p: p.label)
def test_uncontended_between_best_and_worst(p):
    for role in ROLES:
        for phase in PHASES:
            b, u, w = (sem_wait_counts(p, role, phase, sc) for sc in (BEST, UNCONTENDED, WORST))
            assert b <= u <= w


# -- runtime lock -----------------------------------------------------------

def test_fastfair_single_thread_never_blocks():
    lock = make_lock(build_protocol("fastfair"))
    lock.reader_enter()
    p = lock.probe()
    assert (p.waits, p.signals) == (1, 1)
    assert p.ops == [("WAIT", "in"), ("SIGNAL", "in")]
    lock.reader_exit()
    lock.writer_enter()
    lock.writer_exit()
    assert {n: s.value for n, s in lock.sems.items()} == {"in": 1, "out": 1, "wrt": 0}
    assert lock.variables() == {"ctrin": 1, "ctrout": 1, "wait": 0}


def test_classic_first_reader_takes_mx_and_wrt():
    lock = make_lock(build_protocol("classic"))
    lock.reader_enter()
    assert lock.probe().waits == 2
    assert [s for op, s in lock.probe().ops if op == "WAIT"] == ["mx", "wrt"]


def test_alternation_is_enforced():
    lock = make_lock(build_protocol("fastfair"))
    with pytest.raises(ContractViolation):
        lock.reader_exit()
    lock.writer_enter()
    with pytest.raises(ContractViolation):
        lock.writer_enter()


def test_exit_in_another_thread_is_rejected():
    lock = make_lock(build_protocol("fair"))
    lock.reader_enter()
    errors = []

    def other():
        try:
            lock.reader_exit()
        except ContractViolation as exc:
            errors.append(exc)

    t = threading.Thread(target=other)
    t.start()
    t.join()
    assert errors


@pytest.mark.parametrize("p", all_protocols(3), ids=lambda p: p.label)
def test_runtime_probe_matches_symbolic_trace(p):
    for role in ROLES:
        lock = make_lock(p)
        enter = lock.reader_enter if role == READER else lock.writer_enter
        leave = lock.reader_exit if role == READER else lock.writer_exit
        enter()
        assert lock.probe().ops == symbolic_trace(p, role, ENTER)
        leave()
        assert lock.probe().ops == symbolic_trace(p, role, EXIT)


def test_writer_blocks_until_fastfair_reader_leaves():
    lock = make_lock(build_protocol("fastfair"))
    lock.reader_enter()
    entered = threading.Event()

    def writer():
        lock.writer_enter()
        entered.set()
        lock.writer_exit()

    t = threading.Thread(target=writer, daemon=True)
    t.start()
    assert not entered.wait(0.2)
    assert lock.variables()["wait"] == 1
    lock.reader_exit()
    assert entered.wait(5)
    t.join(5)


def test_counters_wrap_without_breaking_equality():
    from rwsem.protocols import COUNTER_BITS
    lock = make_lock(build_protocol("fastfair"))
    top = (1 << COUNTER_BITS) - 1
    lock._vars.update(ctrin=top, ctrout=top)
    lock.reader_enter()
    lock.reader_exit()
    assert lock.variables()["ctrin"] == lock.variables()["ctrout"] == 0
    lock.writer_enter()  # ctrin == ctrout: no wait on wrt
    assert lock.probe().waits == 2
    lock.writer_exit()
