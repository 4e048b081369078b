"""Counting semaphores with explicit wake policies.

Two forms share one semantics:

* ``SemState`` plus :func:`sim_wait` / :func:`sim_signal` is a pure value
  model used by the model checker.
* :class:`RuntimeSemaphore` is a blocking, thread-safe semaphore used by the
  runtime locks and the stress harness.

Both use handoff on signal: when waiters are queued the permit goes straight
to the waiter picked by the policy, the value stays at zero, and a newly
arriving thread cannot barge in ahead of the queue.  OS semaphores do not
promise this, which is why they are not used as the fairness reference.
"""

from __future__ import annotations

import enum
import random
import threading
from collections import deque
from dataclasses import dataclass, field, replace


class ContractViolation(RuntimeError):
    """An API precondition was broken (interpreter bug, not a protocol property)."""


class Policy(enum.Enum):
    FIFO = "fifo"
    LIFO = "lifo"
    RANDOM = "random"


@dataclass(frozen=True)
class WakePolicy:
    kind: Policy = Policy.FIFO
    seed: int | None = None

    def __post_init__(self):
        if not isinstance(self.kind, Policy):
            raise ValueError(f"unknown wake policy {self.kind!r}")
        if self.kind is not Policy.RANDOM and self.seed is not None:
            raise ValueError("seed only applies to the RANDOM policy")

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "WakePolicy":
        kind = Policy(text.lower())
        if kind is Policy.RANDOM:
            return cls(kind, 0 if seed is None else seed)
        return cls(kind)

    def __str__(self):
        return self.kind.value


FIFO = WakePolicy(Policy.FIFO)
LIFO = WakePolicy(Policy.LIFO)
RANDOM = WakePolicy(Policy.RANDOM, 0)


class Outcome(enum.Enum):
    ACQUIRED = "acquired"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class SemState:
    name: str
    value: int
    queue: tuple[int, ...] = ()
    policy: WakePolicy = FIFO

    def __post_init__(self):
        if self.value < 0:
            raise ContractViolation(f"semaphore {self.name}: negative value {self.value}")

    def check(self) -> list[str]:
        """Return descriptions of broken invariants (empty when healthy)."""
        problems = []
        if self.value < 0:
            problems.append(f"{self.name}: value {self.value} < 0")
        if self.value > 0 and self.queue:
            problems.append(f"{self.name}: value {self.value} with waiters {list(self.queue)}")
        if len(set(self.queue)) != len(self.queue):
            problems.append(f"{self.name}: duplicate waiters {list(self.queue)}")
        return problems


def sim_wait(s: SemState, t: int) -> tuple[SemState, Outcome]:
    """Decrement ``s`` or enqueue ``t`` behind the current waiters."""
    if t in s.queue:
        raise ContractViolation(f"thread {t} already waiting on {s.name}")
    if s.value > 0:
        return replace(s, value=s.value - 1), Outcome.ACQUIRED
    return replace(s, queue=s.queue + (t,)), Outcome.BLOCKED


def sim_signal(s: SemState) -> list[tuple[SemState, int | None]]:
    """All possible results of a signal on ``s``.

    With an empty queue there is exactly one result (the value goes up).
    Otherwise the permit is handed to a waiter: FIFO takes the head, LIFO the
    tail, and RANDOM branches over every waiter in queue order.
    """
    q = s.queue
    if not q:
        return [(replace(s, value=s.value + 1), None)]
    kind = s.policy.kind
    if kind is Policy.FIFO:
        picks = [0]
    elif kind is Policy.LIFO:
        picks = [len(q) - 1]
    else:
        picks = range(len(q))
    return [(replace(s, queue=q[:i] + q[i + 1:]), q[i]) for i in picks]


@dataclass
class _Waiter:
    event: threading.Event = field(default_factory=threading.Event)


class RuntimeSemaphore:
    """Blocking counting semaphore with handoff and a pluggable wake policy.

    >>> s = RuntimeSemaphore(1)
    >>> s.acquire(); s.value
    0
    """

    def __init__(self, value: int = 1, policy: WakePolicy = FIFO, name: str = ""):
        if value < 0:
            raise ValueError("initial semaphore value must be >= 0")
        self.name = name
        self.policy = policy
        self._value = value
        self._mutex = threading.Lock()
        self._waiters: deque[_Waiter] = deque()
        self._rng = random.Random(policy.seed) if policy.kind is Policy.RANDOM else None

    @property
    def value(self) -> int:
        return self._value

    @property
    def waiting(self) -> int:
        return len(self._waiters)

    def acquire(self) -> None:
        with self._mutex:
            if self._value > 0:
                self._value -= 1
                return
            w = _Waiter()
            self._waiters.append(w)
        # the releaser removes w from the queue before setting the event, so
        # the permit has already been transferred when wait() returns
        w.event.wait()

    def release(self) -> None:
        with self._mutex:
            if not self._waiters:
                self._value += 1
                return
            kind = self.policy.kind
            if kind is Policy.FIFO:
                w = self._waiters.popleft()
            elif kind is Policy.LIFO:
                w = self._waiters.pop()
            else:
                i = self._rng.randrange(len(self._waiters))
                w = self._waiters[i]
                del self._waiters[i]
            w.event.set()

    def __repr__(self):
        return f"RuntimeSemaphore({self.name!r}, value={self._value}, waiting={self.waiting}, {self.policy})"
