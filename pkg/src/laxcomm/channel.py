"""Channel endpoints: the inlet/outlet API over an exchangeable duct.

A channel is one directed logical link. The sending worker holds the Inlet,
the receiving worker holds the Outlet, and a duct (intra-thread, inter-thread,
or inter-process) carries messages between them. Sends never block unless the
caller opts in with put(); reads never block unless the caller opts in with
step(). A read with nothing new available returns the last received value, so
consumers always have *some* view of the producer, just possibly a stale one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import DuctClosed


@dataclass(frozen=True)
class ChannelMessage:
    """Envelope for one message on one channel.

    sequence_number increases strictly across messages dispatched on the
    channel; bundled_touch_count is the sender's touch counter for the
    receiving side at dispatch time (see Outlet.jump for how receipt folds
    it into the receiver's own counter).
    """

    payload: Any
    bundled_touch_count: int
    sequence_number: int


class PutOutcome(enum.Enum):
    QUEUED = "queued"
    DROPPED = "dropped"


@dataclass(frozen=True)
class StepOutcome:
    """Result of try_step: advanced tells whether a fresh message was taken."""

    advanced: bool
    value: Any


class WorkerProgress:
    """Per-worker update counter shared by every endpoint the worker owns.

    Incremented once per simulation update cycle. Reads are single int
    loads, so an observer can sample it without pausing the worker.
    """

    __slots__ = ("updates",)

    def __init__(self):
        self.updates = 0

    def mark_update(self):
        self.updates += 1


class InletCounters:
    """Send-side instrumentation. Monotone; readable concurrently."""

    __slots__ = ("attempted_send_count", "successful_send_count", "_progress")

    def __init__(self, progress: Optional[WorkerProgress] = None):
        self.attempted_send_count = 0
        self.successful_send_count = 0
        self._progress = progress if progress is not None else WorkerProgress()

    @property
    def update_count(self) -> int:
        return self._progress.updates


class OutletCounters:
    """Receive-side instrumentation. Monotone; readable concurrently."""

    __slots__ = (
        "pull_attempt_count",
        "laden_pull_count",
        "message_count",
        "touch_count",
        "_progress",
    )

    def __init__(self, progress: Optional[WorkerProgress] = None):
        self.pull_attempt_count = 0
        self.laden_pull_count = 0
        self.message_count = 0
        self.touch_count = 0
        self._progress = progress if progress is not None else WorkerProgress()

    @property
    def update_count(self) -> int:
        return self._progress.updates


class Inlet:
    """Sending endpoint of one channel.

    Exactly one producer worker uses an inlet. Each dispatched message
    bundles the sender's current touch counter for the target, read from
    touch_source (normally the co-located outlet of the reverse channel;
    see link_reciprocal).
    """

    __slots__ = ("_duct", "counters", "_touch_source", "_next_seq")

    def __init__(
        self,
        duct,
        *,
        progress: Optional[WorkerProgress] = None,
        touch_source: Optional[Callable[[], int]] = None,
    ):
        self._duct = duct
        self.counters = InletCounters(progress)
        self._touch_source = touch_source if touch_source is not None else (lambda: 0)
        self._next_seq = 0

    @property
    def buffer_capacity(self) -> int:
        return self._duct.capacity

    def try_put(self, payload) -> PutOutcome:
        """Non-blocking send. Queued if the duct had room, else Dropped.

        The new message is the one discarded on a full buffer; queued
        messages are never evicted.
        """
        c = self.counters
        c.attempted_send_count += 1
        msg = ChannelMessage(payload, self._touch_source(), self._next_seq)
        if self._duct.try_enqueue(msg):
            c.successful_send_count += 1
            self._next_seq += 1
            return PutOutcome.QUEUED
        return PutOutcome.DROPPED

    def put(self, payload) -> PutOutcome:
        """Blocking send: waits for buffer space, then enqueues.

        Raises DuctClosed if the outlet is destroyed while waiting, and
        WouldBlockForever where no consumer can ever run (intra-thread duct).
        """
        c = self.counters
        c.attempted_send_count += 1
        msg = ChannelMessage(payload, self._touch_source(), self._next_seq)
        self._duct.enqueue_blocking(msg)
        c.successful_send_count += 1
        self._next_seq += 1
        return PutOutcome.QUEUED

    def close(self):
        self._duct.close_producer()


class Outlet:
    """Receiving endpoint of one channel.

    Exactly one consumer worker uses an outlet. Reads are latest-wins:
    jump() drains everything currently queued and keeps the newest, so a
    backlog never has to be consumed one update at a time (the bulk-drain
    countermeasure to backlog spirals). last_received starts as a
    caller-supplied initial value so reads are total before first receipt.
    """

    __slots__ = ("_duct", "counters", "_last_payload")

    def __init__(self, duct, *, progress=None, initial=None):
        self._duct = duct
        self.counters = OutletCounters(progress)
        self._last_payload = initial

    @property
    def last_received(self):
        return self._last_payload

    def _absorb(self, msgs) -> None:
        c = self.counters
        c.laden_pull_count += 1
        c.message_count += len(msgs)
        newest = msgs[-1]
        self._last_payload = newest.payload
        # receipt protocol: our touch for the peer becomes 1 + what the
        # peer bundled; +2 per completed round trip falls out of this
        c.touch_count = 1 + newest.bundled_touch_count

    def jump(self):
        """Drain all available messages; return the newest payload (or the
        prior value if nothing was queued). One pull attempt regardless of
        how many messages were taken."""
        self.counters.pull_attempt_count += 1
        msgs = self._duct.drain(None)
        if msgs:
            self._absorb(msgs)
        return self._last_payload

    def try_step(self) -> StepOutcome:
        """Take at most one next-in-sequence message."""
        self.counters.pull_attempt_count += 1
        msgs = self._duct.drain(1)
        if msgs:
            self._absorb(msgs)
            return StepOutcome(True, self._last_payload)
        return StepOutcome(False, self._last_payload)

    def step(self):
        """Block until a new message arrives, then take exactly it.

        Counts one pull attempt per returned message (never per internal
        poll), so clumpiness is not skewed by waiting.
        """
        self._duct.wait_for_message()
        # single consumer: nothing else can drain between wakeup and here
        self.counters.pull_attempt_count += 1
        msgs = self._duct.drain(1)
        if not msgs:
            raise DuctClosed("producer closed while waiting")
        self._absorb(msgs)
        return self._last_payload

    def close(self):
        self._duct.close_consumer()


def link_reciprocal(inlet: Inlet, reverse_outlet: Outlet) -> None:
    """Wire an inlet to bundle the touch counter of the co-located outlet
    for the reverse-direction channel. Both endpoints belong to the same
    worker; the pair carries the round-trip touch protocol for one link."""
    inlet._touch_source = lambda: reverse_outlet.counters.touch_count
