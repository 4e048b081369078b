import io
import json
import threading
from pathlib import Path

import pytest

from rwsem import cli
from rwsem.protocols import RWLock, build_protocol

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    buf = io.StringIO()
    code = cli.main(list(argv), stdout=buf)
    return code, buf.getvalue()


def test_check_clean_config_exits_zero():
    code, out = run("check", "--protocol", "fastfair", "--readers", "2", "--writers", "1",
                    "--iters", "1", "--policy", "fifo", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["deadlocks"] == [] and doc["safety_violations"] == []
    assert out == (GOLDEN / "check_fastfair_2r1w.json").read_text()


def test_check_classic_starvation_exits_two():
    code, out = run("check", "--protocol", "classic", "--readers", "2", "--writers", "1", "--loop",
                    "--policy", "fifo", "--check", "starvation", "--format", "json")
    assert code == 2
    doc = json.loads(out)
    assert len(doc["starvation_cycles"]) == 1
    assert out == (GOLDEN / "check_classic_starvation.json").read_text()


def test_check_text_prints_witness():
    code, out = run("check", "--protocol", "classic", "--loop", "--check", "starvation")
    assert code == 2
    assert "-- cycle --" in out
    assert out.split("-- cycle --")[0].rstrip().endswith("W0 wait wrt")


def test_check_overtaking_and_mutants():
    assert run("check", "--protocol", "classic", "--check", "overtaking")[0] == 2
    assert run("check", "--protocol", "fastfair", "--check", "safety,overtaking")[0] == 0
    assert run("check", "--mutant", "fastfair-wrt-init-1")[0] == 2


def test_check_truncated_exits_three():
    code, out = run("check", "--protocol", "fair", "--writers", "2", "--iters", "2", "--max-states", "10")
    assert code == 3
    assert "truncated              true" in out


def test_check_is_bit_identical_across_runs():
    argv = ("check", "--protocol", "classic", "--policy", "random", "--check", "overtaking", "--format", "json")
    assert run(*argv) == run(*argv)


@pytest.mark.parametrize("argv", [
    ("check", "--bogus"),
    ("check", "--protocol", "morris"),
    ("check", "--readers", "0", "--writers", "0"),
    ("check", "--iters", "1", "--check", "starvation"),
    ("check", "--check", "liveness"),
    ("check", "--protocol", "fair", "--capacity", "3"),
    ("ops", "--protocol", "fair"),
    ("bench", "--iters", "0"),
    ("compare", "--protocols", "fair,zzz"),
    (),
])
def test_usage_errors_exit_64(argv):
    assert run(*argv)[0] == 64


def test_ops_table_fastfair_reader_row():
    code, out = run("ops", "--table", "--format", "json")
    assert code == 0
    rows = json.loads(out)
    row = {(r["protocol"], r["role"], r["phase"]): r for r in rows}
    assert row["fastfair", "reader", "enter"]["waits_uncontended"] == 1
    assert row["fastfair", "reader", "exit"]["waits_uncontended"] == 1
    code, text = run("ops")
    assert "fastfair" in text and "waits_worst" in text


def test_ops_single_cell():
    code, out = run("ops", "--protocol", "fastfair", "--role", "writer", "--phase", "enter", "--scenario", "worst",
                    "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["waits"] == 3 and doc["trace"] == ["WAIT in", "WAIT out", "SIGNAL out", "WAIT wrt"]


def test_conform_all_pass():
    code, out = run("conform")
    assert code == 0
    assert out.count("pass") == 4


class ExtraWaitLock(RWLock):
    """Interpreter bug fixture: an extra wait/signal pair before every reader entry."""

    def reader_enter(self):
        self.sems["out"].acquire()
        self.sems["out"].release()
        super().reader_enter()
        self.probe().ops.insert(0, ("WAIT", "out"))


def test_conform_detects_desynchronized_interpreter():
    [res] = cli.conform([build_protocol("fastfair")], lock_factory=ExtraWaitLock)
    assert not res.ok
    assert res.mismatch == "reader enter (uncontended): op 0: expected WAIT in, got WAIT out"


def test_bench_json_fields(tmp_path):
    target = tmp_path / "bench.json"
    code, out = run("bench", "--protocol", "fastfair", "--readers", "2", "--writers", "1", "--iters", "200",
                    "--format", "json", "--out", str(target))
    assert code == 0
    doc = json.loads(out)
    assert target.read_text() == out
    assert doc["guard_violations"] == 0
    assert set(doc["writer_wait_ns"]) == {"min", "mean", "max", "p99"}
    assert doc["waits_per_semaphore"] == {"in": 600, "out": 600, "wrt": doc["waits_per_semaphore"]["wrt"]}
    assert set(doc) >= {"waits_per_semaphore", "guard_violations", "writer_wait_ns", "reader_wait_ns"}


def test_compare_csv():
    code, out = run("compare", "--protocols", "fair,fastfair", "--readers", "2", "--iters", "200", "--format", "csv")
    assert code == 0
    header, *rows = out.strip().splitlines()
    assert header.startswith("protocol,reader_ops")
    assert [r.split(",")[0] for r in rows] == ["fair", "fastfair"]


def test_thread_spawn_failure_exits_70(monkeypatch):
    def boom(self):
        raise RuntimeError("can't start new thread")

    monkeypatch.setattr(threading.Thread, "start", boom)
    assert run("bench", "--iters", "10")[0] == 70


def test_out_write_failure_exits_70(tmp_path):
    assert run("check", "--out", str(tmp_path))[0] == 70  # a directory is not writable as a file


def test_list():
    code, out = run("list")
    assert code == 0 and "fastfair" in out and "random" in out
