"""Datagram wire protocol for inter-process ducts.

Layout, little-endian, fixed 37-byte header followed by the payload:

    magic (4) | version (1) | channel_id (8) | sequence_number (8)
    | bundled_touch_count (8) | payload_length (4) | checksum (4)

The checksum is CRC-32 over the first 33 header bytes plus the payload.
Anything that fails structural or checksum validation is discarded and
counted as transit loss; delivered payloads are bit-identical to what was
sent. Payloads are capped at one safe UDP fragment; larger sends are a
caller error, not a fragmentation job.
"""

from __future__ import annotations

import errno
import select
import socket
import struct
import zlib
from random import Random
from typing import Dict, List, Optional, Tuple

from .channel import ChannelMessage
from .errors import AddressUnreachable, PayloadTooLarge

MAGIC = b"LAXD"
VERSION = 1
MAX_PAYLOAD = 1400
# horizon for discarding stragglers behind the delivery front
REORDER_WINDOW = 64

_HEAD = struct.Struct("<4sBQQQI")  # 33 bytes before the checksum
_CRC = struct.Struct("<I")
HEADER_SIZE = _HEAD.size + _CRC.size  # 37

_I64 = struct.Struct("<q")


def pack_int64(value: int) -> bytes:
    """Default payload codec for integer-valued channels on the wire."""
    return _I64.pack(value)


def unpack_int64(data: bytes) -> int:
    return _I64.unpack(data)[0]


def encode_datagram(msg: ChannelMessage, channel_id: int) -> bytes:
    payload = msg.payload
    if not isinstance(payload, (bytes, bytearray, memoryview)):
        raise TypeError("wire payloads must be bytes")
    payload = bytes(payload)
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(payload)} > {MAX_PAYLOAD}")
    head = _HEAD.pack(
        MAGIC,
        VERSION,
        channel_id,
        msg.sequence_number,
        msg.bundled_touch_count,
        len(payload),
    )
    crc = zlib.crc32(head + payload)
    return head + _CRC.pack(crc) + payload


def decode_datagram(data: bytes) -> Optional[Tuple[int, ChannelMessage]]:
    """Parse and verify one datagram. None on any integrity failure."""
    if len(data) < HEADER_SIZE:
        return None
    magic, version, channel_id, seq, touch, plen = _HEAD.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        return None
    (crc,) = _CRC.unpack_from(data, _HEAD.size)
    payload = data[HEADER_SIZE:]
    if len(payload) != plen:
        return None
    if zlib.crc32(data[: _HEAD.size] + payload) != crc:
        return None
    return channel_id, ChannelMessage(payload, touch, seq)


class ReceiveState:
    """Per-channel receive bookkeeping: dedupe and in-order delivery.

    Arrivals newer than the delivery front wait in `pending`; drains hand
    them out in ascending sequence order. Arrivals at or behind the front
    (or already pending) are discarded as late/duplicate, which in the
    steady flush-everything case means anything older than the newest
    delivered message, well inside the documented REORDER_WINDOW horizon.
    """

    __slots__ = ("pending", "last_delivered", "late_or_dup_count", "delivered_count")

    def __init__(self):
        self.pending: Dict[int, ChannelMessage] = {}
        self.last_delivered = -1
        self.late_or_dup_count = 0
        self.delivered_count = 0

    def accept(self, msg: ChannelMessage) -> None:
        seq = msg.sequence_number
        if seq <= self.last_delivered or seq in self.pending:
            self.late_or_dup_count += 1
            return
        self.pending[seq] = msg

    def take(self, max_messages: Optional[int]) -> List[ChannelMessage]:
        if not self.pending:
            return []
        seqs = sorted(self.pending)
        if max_messages is not None:
            seqs = seqs[:max_messages]
        out = [self.pending.pop(s) for s in seqs]
        self.last_delivered = seqs[-1]
        self.delivered_count += len(out)
        return out

    def __len__(self):
        return len(self.pending)


class WireHub:
    """One UDP socket per process, demultiplexing all wire channels.

    Sends are non-blocking; a kernel refusal surfaces as False so the duct
    can stage the message against its bounded send buffer. Receives are
    ingested opportunistically (during drains or poll) and routed by
    channel_id. Loss injection is receive-side and seeded, for tests that
    need a known drop rate without touching real sockets' behavior.
    """

    def __init__(
        self,
        bind: Tuple[str, int] = ("127.0.0.1", 0),
        *,
        recv_loss_rate: float = 0.0,
        loss_seed: Optional[int] = None,
    ):
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
            sock.bind(bind)
        except OSError as e:
            sock.close()
            raise AddressUnreachable(f"bind {bind}: {e}") from e
        sock.setblocking(False)
        self._sock = sock
        self._channels: Dict[int, ReceiveState] = {}
        self._loss_rate = recv_loss_rate
        self._loss_rng = Random(loss_seed) if recv_loss_rate > 0 else None
        self.datagrams_sent = 0
        self.datagrams_received = 0
        self.injected_drop_count = 0
        self.integrity_discard_count = 0
        self.unroutable_count = 0

    @property
    def local_address(self) -> Tuple[str, int]:
        return self._sock.getsockname()

    def register_receiver(self, channel_id: int) -> ReceiveState:
        state = self._channels.get(channel_id)
        if state is None:
            state = self._channels[channel_id] = ReceiveState()
        return state

    def send(self, msg: ChannelMessage, channel_id: int, dest: Tuple[str, int]) -> bool:
        data = encode_datagram(msg, channel_id)
        try:
            self._sock.sendto(data, dest)
        except (BlockingIOError, InterruptedError):
            return False
        except OSError as e:
            if e.errno in (errno.ENOBUFS, errno.EAGAIN, errno.ECONNREFUSED):
                # refused or transiently unbuffered: best-effort, caller may stage
                return False
            raise
        self.datagrams_sent += 1
        return True

    def ingest(self) -> int:
        """Drain the socket into per-channel receive states. Returns the
        number of datagrams routed."""
        routed = 0
        while True:
            try:
                data, _ = self._sock.recvfrom(65535)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                break
            self.datagrams_received += 1
            if self._loss_rng is not None and self._loss_rng.random() < self._loss_rate:
                self.injected_drop_count += 1
                continue
            decoded = decode_datagram(data)
            if decoded is None:
                self.integrity_discard_count += 1
                continue
            channel_id, msg = decoded
            state = self._channels.get(channel_id)
            if state is None:
                self.unroutable_count += 1
                continue
            state.accept(msg)
            routed += 1
        return routed

    def poll(self, timeout: float) -> int:
        """Wait up to timeout for readability, then ingest."""
        r, _, _ = select.select([self._sock], [], [], timeout)
        if not r:
            return 0
        return self.ingest()

    def close(self):
        self._sock.close()
