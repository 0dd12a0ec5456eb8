"""Consolidating many logical channels into single wire transfers.

Between one sending worker and one peer process, a ChannelPool joins
exactly one fixed-size payload per member channel into one datagram per
flush, and a ChannelAggregator joins arbitrarily many variable-size tagged
messages. Either way the wire cost per update is one transfer (or the
minimum number of frames), independent of how many logical channels exist.

Consolidated frames ride the normal datagram format; the first payload
byte is the frame kind, then the body:

    pooled (0):     concatenated fixed-size member payloads, slot order
    aggregated (1): repeated (member_index: u16, length: u16, payload)
"""

from __future__ import annotations

import enum
import struct
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .channel import ChannelMessage, InletCounters, WorkerProgress
from .errors import PayloadTooLarge
from .wire import MAX_PAYLOAD

FRAME_POOLED = 0
FRAME_AGGREGATED = 1

_ENTRY = struct.Struct("<HH")  # member_index, length
MAX_AGG_ENTRY = MAX_PAYLOAD - 1 - _ENTRY.size


class OfferOutcome(enum.Enum):
    STAGED = "staged"
    REPLACED = "replaced"


class FlushOutcome(enum.Enum):
    FLUSHED = "flushed"
    INCOMPLETE = "incomplete"
    # the fully-staged frame was formed but the wire duct refused it;
    # every member records one attempted, zero successful sends
    DROPPED = "dropped"


@dataclass(frozen=True)
class FlushReport:
    outcome: FlushOutcome
    missing_count: int = 0
    wire_transfers: int = 0
    message_count: int = 0


class MemberDuct:
    """Receive-side queue for one member channel, fed by an unpacker.

    Satisfies the duct drain contract so a plain Outlet can sit on top.
    The feeder may be a different thread than the drainer, hence the lock.
    """

    kind = "pooled_member"

    def __init__(self, pump: Optional[Callable[[], None]] = None):
        self._q: deque = deque()
        self._lock = threading.Lock()
        self._pump = pump
        self._producer_closed = False

    def feed(self, msg: ChannelMessage) -> None:
        with self._lock:
            self._q.append(msg)

    def drain(self, max_messages: Optional[int]) -> List[ChannelMessage]:
        with self._lock:
            q = self._q
            if max_messages is None or max_messages >= len(q):
                out = list(q)
                q.clear()
            else:
                out = [q.popleft() for _ in range(max_messages)]
            return out

    def wait_for_message(self) -> None:
        import time

        while True:
            with self._lock:
                if self._q:
                    return
            if self._pump is not None:
                self._pump()
            time.sleep(0.001)

    def close_producer(self):
        self._producer_closed = True

    def close_consumer(self):
        pass


class ChannelPool:
    """Fixed-membership pooling: one payload per member per wire transfer.

    Member order is fixed at construction and must match the unpacker's on
    the receiving side; the frame then needs no per-message tags. A flush
    dispatches only when every slot is occupied. Offers are latest-wins
    until then. Send accounting happens at flush time: the members share
    the fate of the one consolidated message.
    """

    def __init__(
        self,
        member_count: int,
        payload_size: int,
        wire_duct,
        *,
        progress: Optional[WorkerProgress] = None,
        touch_source: Optional[Callable[[], int]] = None,
    ):
        if member_count < 1:
            raise ValueError("member_count must be >= 1")
        frame_size = 1 + member_count * payload_size
        if frame_size > MAX_PAYLOAD:
            raise PayloadTooLarge(
                f"pooled frame {frame_size}B exceeds {MAX_PAYLOAD}B cap"
            )
        self.member_count = member_count
        self.payload_size = payload_size
        self._duct = wire_duct
        self._slots: List[Optional[bytes]] = [None] * member_count
        self._touch_source = touch_source if touch_source is not None else (lambda: 0)
        self._next_seq = 0
        self.member_counters = [InletCounters(progress) for _ in range(member_count)]
        self.wire_transfer_count = 0

    def offer(self, member_index: int, payload: bytes) -> OfferOutcome:
        if len(payload) != self.payload_size:
            raise ValueError(
                f"pooled payload must be exactly {self.payload_size} bytes"
            )
        prior = self._slots[member_index]
        self._slots[member_index] = payload
        return OfferOutcome.STAGED if prior is None else OfferOutcome.REPLACED

    @property
    def staged_count(self) -> int:
        return sum(1 for s in self._slots if s is not None)

    def try_flush(self) -> FlushReport:
        missing = self.member_count - self.staged_count
        if missing:
            return FlushReport(FlushOutcome.INCOMPLETE, missing_count=missing)
        body = bytes([FRAME_POOLED]) + b"".join(self._slots)
        msg = ChannelMessage(body, self._touch_source(), self._next_seq)
        accepted = self._duct.try_enqueue(msg)
        for c in self.member_counters:
            c.attempted_send_count += 1
            if accepted:
                c.successful_send_count += 1
        self._slots = [None] * self.member_count
        if accepted:
            self._next_seq += 1
            self.wire_transfer_count += 1
            return FlushReport(
                FlushOutcome.FLUSHED, wire_transfers=1, message_count=self.member_count
            )
        return FlushReport(FlushOutcome.DROPPED)


class PoolUnpacker:
    """Receive side of a ChannelPool: splits frames back into member queues.

    Tracks the link-level touch counter (1 + the newest frame's bundled
    value) that the co-located forward pool bundles on its own flushes.
    Member messages inherit the frame's bundled touch and get locally
    assigned per-member sequence numbers (frames arrive in order).
    """

    def __init__(
        self,
        member_ducts: List[MemberDuct],
        payload_size: int,
        wire_duct,
        *,
        decode_payload=None,
    ):
        self.member_ducts = member_ducts
        self.payload_size = payload_size
        self._duct = wire_duct
        self._decode = decode_payload
        self._next_member_seq = [0] * len(member_ducts)
        self.link_touch = 0
        self.frame_count = 0

    def unpack_ready(self) -> int:
        frames = self._duct.drain(None)
        for frame in frames:
            body = frame.payload
            if not body or body[0] != FRAME_POOLED:
                continue
            self.link_touch = 1 + frame.bundled_touch_count
            self.frame_count += 1
            off = 1
            for i, duct in enumerate(self.member_ducts):
                chunk = body[off : off + self.payload_size]
                off += self.payload_size
                value = self._decode(chunk) if self._decode is not None else chunk
                duct.feed(
                    ChannelMessage(
                        value, frame.bundled_touch_count, self._next_member_seq[i]
                    )
                )
                self._next_member_seq[i] += 1
        return len(frames)


class ChannelAggregator:
    """Variable-size consolidation: any number of tagged messages per member.

    A flush serializes everything staged, in member order, into the minimum
    number of frames that respect the datagram cap, then clears staging.
    """

    def __init__(
        self,
        member_count: int,
        wire_duct,
        *,
        progress: Optional[WorkerProgress] = None,
        touch_source: Optional[Callable[[], int]] = None,
    ):
        if member_count < 1:
            raise ValueError("member_count must be >= 1")
        self.member_count = member_count
        self._duct = wire_duct
        self._stage: List[List[bytes]] = [[] for _ in range(member_count)]
        self._touch_source = touch_source if touch_source is not None else (lambda: 0)
        self._next_seq = 0
        self.member_counters = [InletCounters(progress) for _ in range(member_count)]
        self.wire_transfer_count = 0

    def stage(self, member_index: int, payload: bytes) -> None:
        if len(payload) > MAX_AGG_ENTRY:
            raise PayloadTooLarge(
                f"aggregated entry {len(payload)}B exceeds {MAX_AGG_ENTRY}B"
            )
        self._stage[member_index].append(bytes(payload))

    @property
    def staged_count(self) -> int:
        return sum(len(s) for s in self._stage)

    def flush(self) -> FlushReport:
        entries: List[Tuple[int, bytes]] = []
        for i, staged in enumerate(self._stage):
            entries.extend((i, p) for p in staged)
        if not entries:
            return FlushReport(FlushOutcome.FLUSHED)
        frames: List[Tuple[bytes, set]] = []
        body = bytearray([FRAME_AGGREGATED])
        members = set()
        for i, payload in entries:
            piece = _ENTRY.pack(i, len(payload)) + payload
            if len(body) + len(piece) > MAX_PAYLOAD:
                frames.append((bytes(body), members))
                body = bytearray([FRAME_AGGREGATED])
                members = set()
            body += piece
            members.add(i)
        frames.append((bytes(body), members))

        sent = 0
        for frame_body, frame_members in frames:
            msg = ChannelMessage(frame_body, self._touch_source(), self._next_seq)
            accepted = self._duct.try_enqueue(msg)
            for i in frame_members:
                c = self.member_counters[i]
                c.attempted_send_count += 1
                if accepted:
                    c.successful_send_count += 1
            if accepted:
                self._next_seq += 1
                sent += 1
        self._stage = [[] for _ in range(self.member_count)]
        self.wire_transfer_count += sent
        outcome = FlushOutcome.FLUSHED if sent == len(frames) else FlushOutcome.DROPPED
        return FlushReport(outcome, wire_transfers=sent, message_count=len(entries))


class AggregatorUnpacker:
    """Receive side of a ChannelAggregator: routes tagged entries."""

    def __init__(self, member_ducts: List[MemberDuct], wire_duct, *, decode_payload=None):
        self.member_ducts = member_ducts
        self._duct = wire_duct
        self._decode = decode_payload
        self._next_member_seq = [0] * len(member_ducts)
        self.link_touch = 0

    def unpack_ready(self) -> int:
        count = 0
        for frame in self._duct.drain(None):
            body = frame.payload
            if not body or body[0] != FRAME_AGGREGATED:
                continue
            self.link_touch = 1 + frame.bundled_touch_count
            off = 1
            while off + _ENTRY.size <= len(body):
                i, length = _ENTRY.unpack_from(body, off)
                off += _ENTRY.size
                chunk = body[off : off + length]
                off += length
                if i >= len(self.member_ducts) or len(chunk) != length:
                    break
                value = self._decode(chunk) if self._decode is not None else chunk
                self.member_ducts[i].feed(
                    ChannelMessage(
                        value, frame.bundled_touch_count, self._next_member_seq[i]
                    )
                )
                self._next_member_seq[i] += 1
                count += 1
        return count
