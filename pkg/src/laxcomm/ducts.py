"""The three duct transports behind the inlet/outlet API.

All ducts share one contract: try_enqueue (drop-on-full), drain (ordered
removal, the only consumption path), blocking variants, and close flags.
Capacity bounds the send-side buffer; what queues is delivered, in
sequence order, except across processes where the wire may silently lose
datagrams in transit.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from typing import List, Optional, Tuple

from .channel import ChannelMessage
from .errors import DuctClosed, WouldBlockForever
from .wire import WireHub


class IntraThreadDuct:
    """Same-worker FIFO ring. No locking: one thread owns both ends."""

    kind = "intra_thread"

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q: deque = deque()
        self._producer_closed = False
        self._consumer_closed = False

    @property
    def occupancy(self) -> int:
        return len(self._q)

    def try_enqueue(self, msg: ChannelMessage) -> bool:
        if self._consumer_closed:
            raise DuctClosed("outlet destroyed")
        if len(self._q) >= self.capacity:
            return False
        self._q.append(msg)
        return True

    def enqueue_blocking(self, msg: ChannelMessage) -> None:
        if self._consumer_closed:
            raise DuctClosed("outlet destroyed")
        if len(self._q) >= self.capacity:
            # producer and consumer are the same worker; waiting cannot help
            raise WouldBlockForever("intra-thread duct full")
        self._q.append(msg)

    def drain(self, max_messages: Optional[int]) -> List[ChannelMessage]:
        q = self._q
        if max_messages is None or max_messages >= len(q):
            out = list(q)
            q.clear()
        else:
            out = [q.popleft() for _ in range(max_messages)]
        return out

    def wait_for_message(self) -> None:
        if self._q:
            return
        if self._producer_closed:
            raise DuctClosed("inlet destroyed")
        raise WouldBlockForever("intra-thread duct empty")

    def close_producer(self):
        self._producer_closed = True

    def close_consumer(self):
        self._consumer_closed = True


class InterThreadDuct:
    """Bounded FIFO between two threads of one process.

    A single lock plus two condition queues. Enqueue/dequeue are
    linearizable; messages are never duplicated or corrupted in transit.
    """

    kind = "inter_thread"

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q: deque = deque()
        self._lock = threading.Lock()
        self._not_full = threading.Condition(self._lock)
        self._not_empty = threading.Condition(self._lock)
        self._producer_closed = False
        self._consumer_closed = False

    @property
    def occupancy(self) -> int:
        with self._lock:
            return len(self._q)

    def try_enqueue(self, msg: ChannelMessage) -> bool:
        with self._lock:
            if self._consumer_closed:
                raise DuctClosed("outlet destroyed")
            if len(self._q) >= self.capacity:
                return False
            self._q.append(msg)
            self._not_empty.notify()
            return True

    def enqueue_blocking(self, msg: ChannelMessage) -> None:
        with self._lock:
            while True:
                if self._consumer_closed:
                    raise DuctClosed("outlet destroyed")
                if len(self._q) < self.capacity:
                    self._q.append(msg)
                    self._not_empty.notify()
                    return
                self._not_full.wait()

    def drain(self, max_messages: Optional[int]) -> List[ChannelMessage]:
        with self._lock:
            q = self._q
            if max_messages is None or max_messages >= len(q):
                out = list(q)
                q.clear()
            else:
                out = [q.popleft() for _ in range(max_messages)]
            if out:
                self._not_full.notify()
            return out

    def wait_for_message(self) -> None:
        with self._lock:
            while not self._q:
                if self._producer_closed:
                    raise DuctClosed("inlet destroyed")
                self._not_empty.wait()

    def close_producer(self):
        with self._lock:
            self._producer_closed = True
            self._not_empty.notify_all()

    def close_consumer(self):
        with self._lock:
            self._consumer_closed = True
            self._not_full.notify_all()


class InterProcessDuct:
    """One direction of a wire channel over a process's WireHub.

    Each process constructs its own half: the sender half stages against a
    bounded local buffer when the kernel refuses a datagram, the receiver
    half reads from the hub's per-channel reorder state. Payloads on the
    wire are bytes; an optional codec pair converts to and from in-memory
    values at the boundary so outlets see the same types as on local ducts.
    """

    kind = "inter_process"

    def __init__(
        self,
        hub: WireHub,
        channel_id: int,
        *,
        capacity: int,
        dest: Optional[Tuple[str, int]] = None,
        receiving: bool = False,
        encode_payload=None,
        decode_payload=None,
    ):
        self.capacity = capacity
        self.channel_id = channel_id
        self._hub = hub
        self._dest = dest
        self._stage: deque = deque()
        self._encode = encode_payload
        self._decode = decode_payload
        self._rx = hub.register_receiver(channel_id) if receiving else None
        self._producer_closed = False
        self._consumer_closed = False

    @property
    def occupancy(self) -> int:
        return len(self._stage)

    def _to_wire(self, msg: ChannelMessage) -> ChannelMessage:
        if self._encode is None:
            return msg
        return ChannelMessage(
            self._encode(msg.payload), msg.bundled_touch_count, msg.sequence_number
        )

    def flush_stage(self) -> None:
        while self._stage:
            if not self._hub.send(self._stage[0], self.channel_id, self._dest):
                return
            self._stage.popleft()

    def try_enqueue(self, msg: ChannelMessage) -> bool:
        if self._dest is None:
            raise DuctClosed("not a sending half")
        msg = self._to_wire(msg)
        self.flush_stage()
        if self._stage:
            if len(self._stage) >= self.capacity:
                return False
            self._stage.append(msg)
            return True
        if self._hub.send(msg, self.channel_id, self._dest):
            return True
        self._stage.append(msg)
        return True

    def enqueue_blocking(self, msg: ChannelMessage) -> None:
        # staging drains as the kernel accepts; spin with a short sleep
        while not self.try_enqueue(msg):
            time.sleep(50e-6)

    def drain(self, max_messages: Optional[int]) -> List[ChannelMessage]:
        if self._rx is None:
            return []
        self._hub.ingest()
        msgs = self._rx.take(max_messages)
        if self._decode is not None and msgs:
            msgs = [
                ChannelMessage(
                    self._decode(m.payload), m.bundled_touch_count, m.sequence_number
                )
                for m in msgs
            ]
        return msgs

    def wait_for_message(self) -> None:
        if self._rx is None:
            raise DuctClosed("not a receiving half")
        while not self._rx.pending:
            self._hub.poll(0.01)

    def close_producer(self):
        self._producer_closed = True

    def close_consumer(self):
        self._consumer_closed = True
