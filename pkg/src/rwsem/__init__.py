"""Reader-writer locks over policy-configurable counting semaphores."""

from rwsem.protocols import build_protocol, make_lock, sem_wait_counts, symbolic_trace
from rwsem.semaphores import FIFO, LIFO, RANDOM, Policy, RuntimeSemaphore, WakePolicy

__all__ = [
    "FIFO", "LIFO", "RANDOM", "Policy", "RuntimeSemaphore", "WakePolicy",
    "build_protocol", "make_lock", "sem_wait_counts", "symbolic_trace",
]
