"""The five asynchronicity modes and the per-worker update loop.

Mode 0 barriers after every update; mode 1 barriers after timed chunks of
updates; mode 2 barriers when the wall clock passes scheduled ticks of a
shared epoch anchor; mode 3 never waits on anyone; mode 4 is mode 3 with
every communication call skipped. Stop decisions in barriered modes are
made once per generation by the barrier leader, so all workers stop at the
same generation and record equal update counts.

The mode 2 schedule is anchored to a single run-start epoch distributed to
all workers before launch; workers therefore agree on tick identities by
construction instead of racing to round the clock.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import threading

from .errors import BarrierBroken

MODE_NAMES = {
    0: "full_barrier",
    1: "timed_chunks",
    2: "scheduled_ticks",
    3: "fully_async",
    4: "no_comm",
}

DEFAULT_CHUNK_S = {"coloring": 0.010, "compute": 0.100}
DEFAULT_TICK_INTERVAL_S = 1.0


class GenerationBarrier:
    """Reusable barrier with a leader-evaluated broadcast decision.

    The last arriver of each generation runs decide() exactly once while
    holding the lock and its result is handed to every participant of that
    generation. abort() permanently breaks the barrier; current and future
    waiters raise BarrierBroken.
    """

    def __init__(self, parties: int):
        if parties < 1:
            raise ValueError("parties must be >= 1")
        self.parties = parties
        self._cond = threading.Condition()
        self._arrived = 0
        self._generation = 0
        self._decision = False
        self._broken = False

    def wait(self, decide: Optional[Callable[[], bool]] = None) -> tuple:
        with self._cond:
            if self._broken:
                raise BarrierBroken("barrier aborted")
            gen = self._generation
            self._arrived += 1
            if self._arrived >= self.parties:
                self._decision = bool(decide()) if decide is not None else False
                self._arrived = 0
                self._generation += 1
                self._cond.notify_all()
                return gen, self._decision
            while self._generation == gen and not self._broken:
                self._cond.wait()
            if self._broken:
                raise BarrierBroken("barrier aborted")
            return gen, self._decision

    def abort(self):
        with self._cond:
            self._broken = True
            self._cond.notify_all()


@dataclass
class WorkerRunRecord:
    worker_id: int
    updates: int
    wall_s: float
    error: Optional[str] = None


def run_update_loop(
    *,
    worker_id: int,
    mode: int,
    update_fn: Callable[[], None],
    barrier=None,
    duration_s: Optional[float] = None,
    max_updates: Optional[int] = None,
    stop_flag: Optional[threading.Event] = None,
    chunk_s: float = 0.010,
    tick_interval_s: float = DEFAULT_TICK_INTERVAL_S,
    epoch_anchor: Optional[float] = None,
    epoch_clock: Callable[[], float] = time.time,
    clock: Callable[[], float] = time.monotonic,
) -> WorkerRunRecord:
    """Drive update_fn under one asynchronicity mode until a stop condition.

    Duration is enforced at update granularity: the check runs after each
    update (modes 0, 3, 4), after each chunk (mode 1), or at each scheduled
    tick (mode 2, so a run can overshoot by up to one tick interval).
    update_fn performs one full simulation update including communication;
    under mode 4 the caller supplies an update_fn that skips every send and
    pull. Any exception from update_fn aborts the barrier so lockstep peers
    unblock with BarrierBroken instead of hanging.
    """
    if mode not in MODE_NAMES:
        raise ValueError(f"unknown mode {mode}")
    if mode in (0, 1, 2) and barrier is None:
        raise ValueError(f"mode {mode} requires a barrier")

    start = clock()
    deadline = None if duration_s is None else start + duration_s

    def should_stop(n: int) -> bool:
        if stop_flag is not None and stop_flag.is_set():
            return True
        if max_updates is not None and n >= max_updates:
            return True
        if deadline is not None and clock() >= deadline:
            return True
        return False

    n = 0
    error = None
    try:
        if mode == 0:
            while True:
                update_fn()
                n += 1
                _, stop = barrier.wait(lambda: should_stop(n))
                if stop:
                    break
        elif mode == 1:
            def maxed() -> bool:
                return max_updates is not None and n >= max_updates

            stop = False
            while not stop:
                chunk_end = clock() + chunk_s
                while clock() < chunk_end and not maxed():
                    update_fn()
                    n += 1
                # a worker at its update budget keeps arriving at barriers
                # (without updating) until the collective decision stops all
                _, stop = barrier.wait(lambda: should_stop(n))
        elif mode == 2:
            anchor = epoch_anchor if epoch_anchor is not None else epoch_clock()
            interval = tick_interval_s

            def next_tick_after(t: float) -> float:
                k = math.floor((t - anchor) / interval) + 1
                return anchor + k * interval

            def maxed() -> bool:
                return max_updates is not None and n >= max_updates

            tick = next_tick_after(epoch_clock())
            stop = False
            while not stop:
                if not maxed():
                    update_fn()
                    n += 1
                if epoch_clock() >= tick or maxed():
                    _, stop = barrier.wait(lambda: should_stop(n))
                    tick = next_tick_after(epoch_clock())
        else:  # modes 3 and 4: never wait on anyone
            while True:
                update_fn()
                n += 1
                if should_stop(n):
                    break
    except BarrierBroken:
        error = "barrier broken"
    except Exception as e:  # noqa: BLE001 - worker errors become records
        error = f"{type(e).__name__}: {e}"
        if barrier is not None:
            barrier.abort()
    wall = clock() - start
    return WorkerRunRecord(worker_id=worker_id, updates=n, wall_s=wall, error=error)
