"""Toroidal grid topology, worker partitioning, and channel instantiation.

Nodes are row-major indices on a width x height torus; every node has four
von Neumann neighbors with wraparound. Workers get contiguous row bands.
Each directed edge becomes one channel whose duct kind follows the locus
relation of its endpoints: same worker -> intra-thread, same process ->
inter-thread, different processes -> pooled over the wire, one pool per
(sending worker, destination process) pair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .channel import Inlet, Outlet, PutOutcome, WorkerProgress, link_reciprocal
from .consolidation import ChannelPool, MemberDuct, PoolUnpacker
from .ducts import InterProcessDuct, InterThreadDuct, IntraThreadDuct
from .errors import AddressUnreachable, InvalidDimensions
from .qos import EndpointSpec, SnapshotTranche
from .wire import WireHub, pack_int64, unpack_int64


class Direction(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


OPPOSITE = {
    Direction.UP: Direction.DOWN,
    Direction.DOWN: Direction.UP,
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
}

DIRECTIONS = tuple(Direction)


class TorusTopology:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.node_count = width * height

    def coords(self, node: int) -> Tuple[int, int]:
        return node % self.width, node // self.width

    def node_at(self, x: int, y: int) -> int:
        return (y % self.height) * self.width + (x % self.width)

    def neighbor(self, node: int, direction: Direction) -> int:
        x, y = self.coords(node)
        if direction == Direction.UP:
            return self.node_at(x, y - 1)
        if direction == Direction.DOWN:
            return self.node_at(x, y + 1)
        if direction == Direction.LEFT:
            return self.node_at(x - 1, y)
        return self.node_at(x + 1, y)

    def neighbors(self, node: int) -> Tuple[int, int, int, int]:
        return tuple(self.neighbor(node, d) for d in DIRECTIONS)

    @property
    def undirected_edge_count(self) -> int:
        # 2 per node: right and down slots cover every edge exactly once,
        # counting parallel edges on 2-wide or 2-tall wraps with multiplicity
        return 2 * self.width * self.height

    def __repr__(self):
        return f"TorusTopology({self.width}x{self.height})"


def build_torus(width: int, height: int) -> TorusTopology:
    if width < 1 or height < 1:
        raise InvalidDimensions(f"torus dimensions must be >= 1, got {width}x{height}")
    return TorusTopology(width, height)


@dataclass
class PartitionAssignment:
    topology: TorusTopology
    num_workers: int
    worker_of: List[int]  # node id -> worker id

    def nodes_of(self, worker: int) -> List[int]:
        return [n for n, w in enumerate(self.worker_of) if w == worker]

    def counts(self) -> List[int]:
        out = [0] * self.num_workers
        for w in self.worker_of:
            out[w] += 1
        return out


def partition_block(
    topology: TorusTopology, num_workers: int, rows_per_band: Optional[int] = None
) -> PartitionAssignment:
    """Assign contiguous horizontal row bands to workers.

    Default banding balances row counts (differ by at most one). An explicit
    rows_per_band gives every worker but the last exactly that many rows;
    leftover rows go to the last band (uneven division allowed).
    """
    if num_workers < 1:
        raise ValueError("num_workers must be >= 1")
    h = topology.height
    band_of_row = [0] * h
    if rows_per_band is None:
        base, extra = divmod(h, num_workers)
        row = 0
        for w in range(num_workers):
            take = base + (1 if w < extra else 0)
            for _ in range(take):
                if row < h:
                    band_of_row[row] = w
                    row += 1
    else:
        if rows_per_band < 1:
            raise ValueError("rows_per_band must be >= 1")
        for row in range(h):
            band_of_row[row] = min(row // rows_per_band, num_workers - 1)
    worker_of = [band_of_row[n // topology.width] for n in range(topology.node_count)]
    return PartitionAssignment(topology, num_workers, worker_of)


ChannelKey = Tuple[int, Direction]


def reciprocal_key(topology: TorusTopology, key: ChannelKey) -> ChannelKey:
    node, d = key
    return topology.neighbor(node, d), OPPOSITE[d]


def channel_key_str(key: ChannelKey) -> str:
    node, d = key
    return f"n{node}:{Direction(d).name.lower()}"


@dataclass
class ChannelConfig:
    buffer_capacity: int = 2
    # outlet initial value, called with the channel's source node
    initial_payload: Optional[Callable[[int], object]] = None
    worker_process: Optional[List[int]] = None  # worker id -> process rank
    local_rank: int = 0
    hub: Optional[WireHub] = None
    peer_addresses: Dict[int, Tuple[str, int]] = field(default_factory=dict)
    channel_id_base: int = 0  # high bits tag, e.g. replicate index << 32
    member_payload_size: int = 8
    encode_payload: Callable[[object], bytes] = pack_int64
    decode_payload: Callable[[bytes], object] = unpack_int64


class DirectSendPort:
    """Send side of a channel with its own duct (intra/inter-thread)."""

    __slots__ = ("inlet", "kind")

    def __init__(self, inlet: Inlet, kind: str):
        self.inlet = inlet
        self.kind = kind

    def send(self, payload) -> PutOutcome:
        return self.inlet.try_put(payload)

    @property
    def counters(self):
        return self.inlet.counters


class PooledSendPort:
    """Send side of one member channel of a pool. Offers stage the encoded
    payload; the pool's end-of-update flush dispatches and does the send
    accounting for all members at once."""

    __slots__ = ("pool", "member_index", "_encode", "kind")

    def __init__(self, pool: ChannelPool, member_index: int, encode):
        self.pool = pool
        self.member_index = member_index
        self._encode = encode
        self.kind = "pooled"

    def send(self, payload) -> PutOutcome:
        self.pool.offer(self.member_index, self._encode(payload))
        return PutOutcome.QUEUED

    @property
    def counters(self):
        return self.pool.member_counters[self.member_index]


class ChannelRegistry:
    """All channel endpoints a process hosts, keyed (source node, direction).

    Construction runs identically on every process from shared config; each
    builds only its local halves. Immutable once workers launch.
    """

    def __init__(self, assignment: PartitionAssignment, config: ChannelConfig):
        self.assignment = assignment
        self.config = config
        topo = assignment.topology
        wp = config.worker_process or [0] * assignment.num_workers
        if len(wp) != assignment.num_workers:
            raise ValueError("worker_process must list a rank per worker")
        self.worker_process = wp
        self.local_rank = config.local_rank
        self.hub = config.hub
        self.progress: Dict[int, WorkerProgress] = {
            w: WorkerProgress()
            for w in range(assignment.num_workers)
            if wp[w] == self.local_rank
        }
        self.send_ports: Dict[ChannelKey, object] = {}
        self.outlets: Dict[ChannelKey, Outlet] = {}
        self.pools: Dict[Tuple[int, int], ChannelPool] = {}
        self.unpackers: Dict[Tuple[int, int], PoolUnpacker] = {}
        self._pool_members: Dict[Tuple[int, int], List[ChannelKey]] = {}
        self._specs: List[EndpointSpec] = []

        initial = config.initial_payload or (lambda node: None)
        cut: Dict[Tuple[int, int], List[ChannelKey]] = {}

        for node in range(topo.node_count):
            for d in DIRECTIONS:
                key = (node, d)
                dst = topo.neighbor(node, d)
                src_w, dst_w = assignment.worker_of[node], assignment.worker_of[dst]
                src_r, dst_r = wp[src_w], wp[dst_w]
                if src_r != dst_r:
                    # wire channel, grouped per (sending worker, dest rank)
                    cut.setdefault((src_w, dst_r), []).append(key)
                    continue
                if src_r != self.local_rank:
                    continue
                if src_w == dst_w:
                    duct = IntraThreadDuct(config.buffer_capacity)
                    kind = "intra_thread"
                else:
                    duct = InterThreadDuct(config.buffer_capacity)
                    kind = "inter_thread"
                outlet = Outlet(
                    duct, progress=self.progress[dst_w], initial=initial(node)
                )
                inlet = Inlet(duct, progress=self.progress[src_w])
                self.send_ports[key] = DirectSendPort(inlet, kind)
                self.outlets[key] = outlet

        # reciprocal touch wiring for direct channels
        for key, port in self.send_ports.items():
            rev = reciprocal_key(topo, key)
            rev_outlet = self.outlets.get(rev)
            if rev_outlet is not None:
                link_reciprocal(port.inlet, rev_outlet)

        # pooled wire channels; member order is the canonical sorted key list
        for pair_index, pair in enumerate(sorted(cut)):
            src_w, dst_r = pair
            keys = sorted(cut[pair])
            self._pool_members[pair] = keys
            src_r = wp[src_w]
            cid = config.channel_id_base | (src_w << 16) | dst_r
            if src_r == self.local_rank:
                if self.hub is None:
                    raise AddressUnreachable("cross-process channels need a hub")
                dest = config.peer_addresses.get(dst_r)
                if dest is None:
                    raise AddressUnreachable(f"no address for rank {dst_r}")
                duct = InterProcessDuct(
                    self.hub, cid, capacity=config.buffer_capacity, dest=dest
                )
                pool = ChannelPool(
                    len(keys),
                    config.member_payload_size,
                    duct,
                    progress=self.progress[src_w],
                )
                self.pools[pair] = pool
                for i, key in enumerate(keys):
                    self.send_ports[key] = PooledSendPort(
                        pool, i, config.encode_payload
                    )
            if dst_r == self.local_rank:
                if self.hub is None:
                    raise AddressUnreachable("cross-process channels need a hub")
                duct = InterProcessDuct(
                    self.hub, cid, capacity=config.buffer_capacity, receiving=True
                )
                member_ducts = []
                for key in keys:
                    md = MemberDuct(pump=self.pump)
                    member_ducts.append(md)
                    node, d = key
                    dst_node = topo.neighbor(node, d)
                    dst_w = assignment.worker_of[dst_node]
                    self.outlets[key] = Outlet(
                        md, progress=self.progress[dst_w], initial=initial(node)
                    )
                self.unpackers[pair] = PoolUnpacker(
                    member_ducts,
                    config.member_payload_size,
                    duct,
                    decode_payload=config.decode_payload,
                )

        # pool-level touch: a pool bundles the link touch tracked by the
        # unpacker of the reverse wire direction (peer worker -> local rank)
        for (src_w, dst_r), pool in self.pools.items():
            reverse = [
                up
                for (peer_w, rank), up in self.unpackers.items()
                if rank == wp[src_w] and wp[peer_w] == dst_r
            ]
            if len(reverse) == 1:
                up = reverse[0]
                pool._touch_source = lambda up=up: up.link_touch
            elif reverse:
                pool._touch_source = lambda ups=reverse: max(
                    u.link_touch for u in ups
                )

        self._build_specs()

    # -- runtime services ------------------------------------------------

    def pump(self) -> None:
        """Ingest the wire and unpack consolidated frames into member queues."""
        if self.hub is not None:
            self.hub.ingest()
        for up in self.unpackers.values():
            up.unpack_ready()

    def flush_pools(self) -> None:
        for pool in self.pools.values():
            pool.try_flush()

    def mark_update(self, worker: int) -> None:
        self.progress[worker].mark_update()

    def inbound_outlets(self, node: int) -> List[Outlet]:
        """The four outlets carrying this node's neighbors' payloads, in
        Direction order (entry d = latest value of the d-neighbor)."""
        topo = self.assignment.topology
        out = []
        for d in DIRECTIONS:
            m = topo.neighbor(node, d)
            out.append(self.outlets[(m, OPPOSITE[d])])
        return out

    def outbound_ports(self, node: int) -> List[object]:
        return [self.send_ports[(node, d)] for d in DIRECTIONS]

    # -- qos -------------------------------------------------------------

    def _build_specs(self) -> None:
        topo = self.assignment.topology
        wp = self.worker_process
        wof = self.assignment.worker_of
        for key, port in self.send_ports.items():
            node, d = key
            dst_w = wof[topo.neighbor(node, d)]
            src_w = wof[node]
            if src_w == dst_w:
                continue  # same-worker channels carry no cross-worker QoS
            counters = port.counters
            if isinstance(port, PooledSendPort):
                touch = port.pool._touch_source
            else:
                touch = port.inlet._touch_source
            self._specs.append(
                EndpointSpec(
                    key=channel_key_str(key),
                    side="inlet",
                    worker_id=src_w,
                    peer_worker=dst_w,
                    read=self._inlet_reader(counters, touch),
                )
            )
        for key, outlet in self.outlets.items():
            node, d = key
            src_w = wof[node]
            dst_w = wof[topo.neighbor(node, d)]
            if src_w == dst_w:
                continue
            self._specs.append(
                EndpointSpec(
                    key=channel_key_str(key),
                    side="outlet",
                    worker_id=dst_w,
                    peer_worker=src_w,
                    read=self._outlet_reader(outlet.counters),
                )
            )

    @staticmethod
    def _inlet_reader(counters, touch_source):
        def read(walltime_ns: int) -> SnapshotTranche:
            return SnapshotTranche(
                capture_walltime_ns=walltime_ns,
                update_count=counters.update_count,
                touch_count=touch_source(),
                message_count=0,
                pull_attempt_count=0,
                laden_pull_count=0,
                attempted_send_count=counters.attempted_send_count,
                successful_send_count=counters.successful_send_count,
            )

        return read

    @staticmethod
    def _outlet_reader(counters):
        def read(walltime_ns: int) -> SnapshotTranche:
            return SnapshotTranche(
                capture_walltime_ns=walltime_ns,
                update_count=counters.update_count,
                touch_count=counters.touch_count,
                message_count=counters.message_count,
                pull_attempt_count=counters.pull_attempt_count,
                laden_pull_count=counters.laden_pull_count,
                attempted_send_count=0,
                successful_send_count=0,
            )

        return read

    def endpoint_specs(self) -> List[EndpointSpec]:
        return list(self._specs)


def instantiate_channels(
    assignment: PartitionAssignment, config: ChannelConfig
) -> ChannelRegistry:
    return ChannelRegistry(assignment, config)
