"""laxcomm: best-effort channels with delivery-quality instrumentation.

Channels move payloads between workers without ever blocking the sender on
a slow receiver: sends tail-drop when the buffer is full, reads take the
latest value and fall back to the last one seen. Per-channel counters feed
windowed quality metrics (period, latency, failure rate, clumpiness)
captured by an observer thread without pausing workers. A benchmark CLI
(laxbench) exercises the stack with distributed graph coloring and a
synthetic compute load under five synchronization modes, from full
lockstep to no communication at all.
"""

from .bench import BenchResult, RunConfig, run_benchmark
from .channel import (
    ChannelMessage,
    Inlet,
    InletCounters,
    Outlet,
    OutletCounters,
    PutOutcome,
    StepOutcome,
    WorkerProgress,
    link_reciprocal,
)
from .consolidation import (
    AggregatorUnpacker,
    ChannelAggregator,
    ChannelPool,
    FlushOutcome,
    FlushReport,
    MemberDuct,
    OfferOutcome,
    PoolUnpacker,
)
from .ducts import InterProcessDuct, InterThreadDuct, IntraThreadDuct
from .errors import (
    AddressUnreachable,
    BarrierBroken,
    ConfigError,
    DuctClosed,
    EmptyInput,
    InvalidDimensions,
    InvalidTopology,
    LaunchError,
    LaxcommError,
    NoSendsAttempted,
    NoUpdatesElapsed,
    PayloadTooLarge,
    TransportError,
    WouldBlockForever,
)
from .qos import (
    QosReport,
    SnapshotObserver,
    SnapshotTranche,
    SnapshotWindow,
    aggregate_replicate,
    delivery_clumpiness,
    delivery_failure_rate,
    simstep_latency,
    simstep_period,
    walltime_latency,
    window_report,
)
from .sync_modes import (
    GenerationBarrier,
    MODE_NAMES,
    WorkerRunRecord,
    run_update_loop,
)
from .topology import (
    ChannelConfig,
    ChannelRegistry,
    Direction,
    PartitionAssignment,
    TorusTopology,
    build_torus,
    instantiate_channels,
    partition_block,
)
from .wire import (
    MAX_PAYLOAD,
    REORDER_WINDOW,
    WireHub,
    decode_datagram,
    encode_datagram,
)
from .workloads import (
    ColoringNodeState,
    WorkloadParams,
    burn_compute,
    coloring_update,
    count_conflicts,
    derive_seed,
    init_node,
    initial_color,
    node_rng,
)

__version__ = "0.1.0"

__all__ = [
    "AddressUnreachable",
    "AggregatorUnpacker",
    "BarrierBroken",
    "BenchResult",
    "ChannelAggregator",
    "ChannelConfig",
    "ChannelMessage",
    "ChannelPool",
    "ChannelRegistry",
    "ColoringNodeState",
    "ConfigError",
    "Direction",
    "DuctClosed",
    "EmptyInput",
    "FlushOutcome",
    "FlushReport",
    "GenerationBarrier",
    "Inlet",
    "InletCounters",
    "InterProcessDuct",
    "InterThreadDuct",
    "IntraThreadDuct",
    "InvalidDimensions",
    "InvalidTopology",
    "LaunchError",
    "LaxcommError",
    "MAX_PAYLOAD",
    "MODE_NAMES",
    "MemberDuct",
    "NoSendsAttempted",
    "NoUpdatesElapsed",
    "OfferOutcome",
    "Outlet",
    "OutletCounters",
    "PartitionAssignment",
    "PayloadTooLarge",
    "PoolUnpacker",
    "PutOutcome",
    "QosReport",
    "REORDER_WINDOW",
    "RunConfig",
    "SnapshotObserver",
    "SnapshotTranche",
    "SnapshotWindow",
    "StepOutcome",
    "TorusTopology",
    "TransportError",
    "WireHub",
    "WorkerProgress",
    "WorkerRunRecord",
    "WorkloadParams",
    "WouldBlockForever",
    "aggregate_replicate",
    "build_torus",
    "burn_compute",
    "coloring_update",
    "count_conflicts",
    "decode_datagram",
    "delivery_clumpiness",
    "delivery_failure_rate",
    "derive_seed",
    "encode_datagram",
    "init_node",
    "initial_color",
    "instantiate_channels",
    "link_reciprocal",
    "node_rng",
    "partition_block",
    "run_benchmark",
    "run_update_loop",
    "simstep_latency",
    "simstep_period",
    "walltime_latency",
    "window_report",
]
