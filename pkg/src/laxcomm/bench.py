"""Benchmark orchestration: configuration, worker launch, result emission.

A run is `replicates` independent repetitions of the same configured
experiment, each with a seed derived from the master seed. Workers map to
threads of one process or to one process per worker; either way worker i
owns a contiguous row band of the torus and drives the same update loop
under the configured asynchronicity mode.

Per update a worker pumps the wire (process locus), pulls the latest
neighbor values for each of its nodes, applies the workload rule, sends on
each node's four outbound channels, and flushes its consolidation pools.
Mode 4 skips every one of those communication calls and runs against a
frozen snapshot of the initial neighbor values, which are computable
anywhere from the seed.

Multi-process runs coordinate over the TCP control plane: rank 0 owns the
replicate loop, distributes the start epoch, serves lockstep barriers, and
gathers per-rank results (including snapshot logs) for merged output.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from random import Random
from typing import Dict, List, Optional, Sequence, Tuple

from .control import (
    ControlClient,
    ControlServer,
    ProcessBarrier,
    sleep_until_epoch,
)
from .errors import ConfigError, LaunchError
from .qos import (
    QOS_CSV_COLUMNS,
    QOS_META_NOTES,
    SnapshotObserver,
    SnapshotTranche,
    WindowRecord,
    build_qos_rows,
)
from .sync_modes import (
    DEFAULT_CHUNK_S,
    DEFAULT_TICK_INTERVAL_S,
    GenerationBarrier,
    MODE_NAMES,
    WorkerRunRecord,
    run_update_loop,
)
from .topology import (
    ChannelConfig,
    ChannelRegistry,
    PartitionAssignment,
    build_torus,
    instantiate_channels,
    partition_block,
)
from .wire import WireHub
from .workloads import (
    WorkloadParams,
    burn_compute,
    coloring_update,
    count_conflicts,
    derive_seed,
    init_node,
    initial_color,
    make_work_rng,
    node_rng,
    require_coloring_topology,
)

__version__ = "0.1.0"

DEFAULT_BASE_PORT = 47000
# channels to every node get big buffers and tiny per-worker node counts
# by default when snapshot instrumentation is on; throughput runs default
# to many nodes and shallow latest-wins buffers
QOS_DEFAULT_NODES_PER_WORKER = 1
QOS_DEFAULT_BUFFER = 64
THROUGHPUT_DEFAULT_NODES_PER_WORKER = 2048
THROUGHPUT_DEFAULT_BUFFER = 2

SUMMARY_CSV_COLUMNS = [
    "run_id",
    "replicate",
    "seed",
    "workload",
    "mode",
    "mode_name",
    "locus",
    "workers",
    "worker_id",
    "grid_width",
    "grid_height",
    "nodes_per_worker",
    "buffer_capacity",
    "num_colors",
    "b",
    "compute_work_units",
    "duration_s",
    "max_updates",
    "updates",
    "wall_s",
    "update_rate",
    "initial_conflicts",
    "final_conflicts",
    "error",
    "version",
]


@dataclass
class RunConfig:
    """Everything a benchmark run needs; unset fields resolve to defaults.

    Precedence is handled by the CLI (built-in < config file < flags);
    this class only validates and fills derived values.
    """

    workload: str = "coloring"
    mode: int = 0
    locus: str = "threads"
    workers: int = 1
    grid: Optional[Tuple[int, int]] = None
    nodes_per_worker: Optional[int] = None
    buffer_capacity: Optional[int] = None
    num_colors: int = 3
    b: float = 0.1
    compute_work_units: int = 0
    success_reset: bool = False
    duration_s: Optional[float] = None
    max_updates: Optional[int] = None
    chunk_s: Optional[float] = None
    tick_interval_s: float = DEFAULT_TICK_INTERVAL_S
    snapshot_interval_s: Optional[float] = None
    snapshot_window_s: float = 1.0
    replicates: int = 1
    master_seed: int = 0
    jitter_s: float = 0.0
    jitter_workers: Tuple[int, ...] = ()
    stop_when_solved: bool = False
    summary_csv: Optional[str] = None
    qos_csv: Optional[str] = None
    host: str = "127.0.0.1"
    base_port: Optional[int] = None
    rank: Optional[int] = None

    def resolved(self) -> "RunConfig":
        cfg = replace(self)
        if cfg.workload not in ("coloring", "compute"):
            raise ConfigError(f"workload: expected coloring|compute, got {cfg.workload!r}")
        if not isinstance(cfg.mode, int) or cfg.mode not in MODE_NAMES:
            raise ConfigError(f"mode: expected 0..4, got {cfg.mode!r}")
        if cfg.locus not in ("threads", "processes"):
            raise ConfigError(f"locus: expected threads|processes, got {cfg.locus!r}")
        if cfg.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {cfg.workers}")
        if cfg.replicates < 1:
            raise ConfigError(f"replicates: must be >= 1, got {cfg.replicates}")
        if not (0.0 < cfg.b < 1.0):
            raise ConfigError(f"b: must be in (0, 1), got {cfg.b}")
        if cfg.num_colors < 2:
            raise ConfigError(f"num_colors: must be >= 2, got {cfg.num_colors}")
        if cfg.compute_work_units < 0:
            raise ConfigError(f"compute_work_units: must be >= 0, got {cfg.compute_work_units}")
        if cfg.jitter_s < 0:
            raise ConfigError(f"jitter_s: must be >= 0, got {cfg.jitter_s}")
        for w in cfg.jitter_workers:
            if not (0 <= w < cfg.workers):
                raise ConfigError(f"jitter_workers: worker {w} out of range")
        if cfg.duration_s is not None and cfg.duration_s <= 0:
            raise ConfigError(f"duration_s: must be > 0, got {cfg.duration_s}")
        if cfg.max_updates is not None and cfg.max_updates < 1:
            raise ConfigError(f"max_updates: must be >= 1, got {cfg.max_updates}")
        if cfg.duration_s is None and cfg.max_updates is None:
            cfg.duration_s = 5.0
        if cfg.chunk_s is None:
            cfg.chunk_s = DEFAULT_CHUNK_S[cfg.workload]
        if cfg.chunk_s <= 0:
            raise ConfigError(f"chunk_s: must be > 0, got {cfg.chunk_s}")
        if cfg.tick_interval_s <= 0:
            raise ConfigError(f"tick_interval_s: must be > 0, got {cfg.tick_interval_s}")
        if cfg.snapshot_interval_s is not None:
            if cfg.snapshot_interval_s <= 0:
                raise ConfigError(
                    f"snapshot_interval_s: must be > 0, got {cfg.snapshot_interval_s}"
                )
            if cfg.duration_s is None:
                raise ConfigError(
                    "snapshot_interval_s: snapshot windows need duration_s"
                )
        if cfg.snapshot_window_s <= 0:
            raise ConfigError(f"snapshot_window_s: must be > 0, got {cfg.snapshot_window_s}")
        if cfg.stop_when_solved:
            if cfg.workload != "coloring" or cfg.workers != 1:
                raise ConfigError(
                    "stop_when_solved: only supported for single-worker coloring"
                )

        snapshots = cfg.snapshot_interval_s is not None
        if cfg.nodes_per_worker is None:
            if cfg.grid is not None:
                total = cfg.grid[0] * cfg.grid[1]
                if total % cfg.workers:
                    raise ConfigError(
                        f"grid: {cfg.grid[0]}x{cfg.grid[1]} not divisible by "
                        f"{cfg.workers} workers"
                    )
                cfg.nodes_per_worker = total // cfg.workers
            else:
                cfg.nodes_per_worker = (
                    QOS_DEFAULT_NODES_PER_WORKER
                    if snapshots
                    else THROUGHPUT_DEFAULT_NODES_PER_WORKER
                )
        if cfg.nodes_per_worker < 1:
            raise ConfigError(f"nodes_per_worker: must be >= 1, got {cfg.nodes_per_worker}")
        if cfg.buffer_capacity is None:
            cfg.buffer_capacity = (
                QOS_DEFAULT_BUFFER if snapshots else THROUGHPUT_DEFAULT_BUFFER
            )
        if cfg.buffer_capacity < 1:
            raise ConfigError(f"buffer_capacity: must be >= 1, got {cfg.buffer_capacity}")

        total = cfg.workers * cfg.nodes_per_worker
        if cfg.grid is None:
            cfg.grid = _derive_grid(cfg.workers, cfg.nodes_per_worker)
        else:
            cfg.grid = (int(cfg.grid[0]), int(cfg.grid[1]))
            if cfg.grid[0] < 1 or cfg.grid[1] < 1:
                raise ConfigError(f"grid: dimensions must be >= 1, got {cfg.grid}")
            if cfg.grid[0] * cfg.grid[1] != total:
                raise ConfigError(
                    f"grid: {cfg.grid[0]}x{cfg.grid[1]} != workers*nodes_per_worker "
                    f"({cfg.workers}*{cfg.nodes_per_worker}={total})"
                )
        if cfg.base_port is None:
            cfg.base_port = int(os.environ.get("LAXCOMM_BASE_PORT", DEFAULT_BASE_PORT))
        if cfg.rank is not None and not (0 <= cfg.rank < cfg.workers):
            raise ConfigError(f"rank: must be in [0, {cfg.workers}), got {cfg.rank}")
        return cfg


def _derive_grid(workers: int, nodes_per_worker: int) -> Tuple[int, int]:
    """Widest torus that keeps whole rows per worker and stays near square."""
    total = workers * nodes_per_worker
    width = 1
    for d in range(1, nodes_per_worker + 1):
        if nodes_per_worker % d == 0 and d * d <= total:
            width = d
    return width, total // width


def compute_run_id(cfg: RunConfig) -> str:
    """Deterministic across processes of one launch: outputs and the local
    rank are excluded, everything that shapes the experiment is included."""
    payload = dataclasses.asdict(cfg)
    for k in ("summary_csv", "qos_csv", "rank"):
        payload.pop(k, None)
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# -- per-replicate runtime -------------------------------------------------


@dataclass
class _Runtime:
    """Everything one process needs to run its local workers for one
    replicate."""

    registry: ChannelRegistry
    assignment: PartitionAssignment
    params: WorkloadParams
    seed: int
    states: Dict[int, object]  # node -> ColoringNodeState (coloring only)
    colors: Dict[int, int]  # node -> latest local color (coloring only)
    update_fns: Dict[int, object]  # worker -> callable
    initial_conflicts: Optional[int]
    stop_flag: Optional[threading.Event] = None


def _build_runtime(
    cfg: RunConfig,
    seed: int,
    replicate: int,
    local_rank: int,
    hub: Optional[WireHub],
) -> _Runtime:
    topo = build_torus(*cfg.grid)
    if cfg.workload == "coloring":
        require_coloring_topology(topo)
    assignment = partition_block(topo, cfg.workers)
    if cfg.locus == "threads":
        worker_process = [0] * cfg.workers
    else:
        worker_process = list(range(cfg.workers))

    params = WorkloadParams(
        num_colors=cfg.num_colors,
        b=cfg.b,
        compute_work_units=cfg.compute_work_units,
        success_reset=cfg.success_reset,
    )
    comm = cfg.mode != 4

    if cfg.workload == "coloring":
        initial_payload = lambda node: initial_color(seed, node, cfg.num_colors)
    else:
        initial_payload = lambda node: 0

    chan_cfg = ChannelConfig(
        buffer_capacity=cfg.buffer_capacity,
        initial_payload=initial_payload,
        worker_process=worker_process,
        local_rank=local_rank,
        hub=hub,
        peer_addresses={
            r: (cfg.host, cfg.base_port + r) for r in range(cfg.workers)
        },
        channel_id_base=replicate << 32,
    )
    registry = instantiate_channels(assignment, chan_cfg)

    local_workers = [
        w for w in range(cfg.workers) if worker_process[w] == local_rank
    ]
    states: Dict[int, object] = {}
    colors: Dict[int, int] = {}
    initial_conflicts = None
    if cfg.workload == "coloring":
        for w in local_workers:
            for n in assignment.nodes_of(w):
                st = init_node(node_rng(seed, n), cfg.num_colors, n)
                states[n] = st
                colors[n] = st.current_color
        # global initial conflict count; recomputable on any process
        initial_conflicts = count_conflicts(
            topo, [initial_color(seed, n, cfg.num_colors) for n in range(topo.node_count)]
        )

    stop_flag: Optional[threading.Event] = None
    solved_cb = None
    if cfg.stop_when_solved:
        stop_flag = threading.Event()
        all_nodes = range(topo.node_count)

        def solved_cb():
            if count_conflicts(topo, [colors[n] for n in all_nodes]) == 0:
                stop_flag.set()

    update_fns = {}
    for w in local_workers:
        update_fns[w] = _make_update_fn(
            cfg, registry, assignment, params, seed, w, comm, states, colors, solved_cb
        )

    return _Runtime(
        registry=registry,
        assignment=assignment,
        params=params,
        seed=seed,
        states=states,
        colors=colors,
        update_fns=update_fns,
        initial_conflicts=initial_conflicts,
        stop_flag=stop_flag,
    )


def _make_update_fn(
    cfg: RunConfig,
    registry: ChannelRegistry,
    assignment: PartitionAssignment,
    params: WorkloadParams,
    seed: int,
    worker: int,
    comm: bool,
    states: Dict[int, object],
    colors: Dict[int, int],
    solved_cb,
):
    topo = assignment.topology
    nodes = assignment.nodes_of(worker)
    jitter_s = cfg.jitter_s if worker in cfg.jitter_workers else 0.0
    jitter_rng = Random(seed ^ (0x9E3779B9 * (worker + 1))) if jitter_s > 0 else None
    progress = registry.progress[worker]

    if comm:
        inbound = {n: registry.inbound_outlets(n) for n in nodes}
        outbound = {n: registry.outbound_ports(n) for n in nodes}
    else:
        inbound = outbound = {}
        frozen = {
            n: [initial_color(seed, m, cfg.num_colors) for m in topo.neighbors(n)]
            for n in nodes
        }

    if cfg.workload == "coloring":

        def update():
            if comm:
                registry.pump()
                for n in nodes:
                    st = states[n]
                    neighbor_colors = [o.jump() for o in inbound[n]]
                    c = coloring_update(st, neighbor_colors, params)
                    colors[n] = c
                    for port in outbound[n]:
                        port.send(c)
                registry.flush_pools()
            else:
                for n in nodes:
                    c = coloring_update(states[n], frozen[n], params)
                    colors[n] = c
            if jitter_rng is not None:
                time.sleep(jitter_rng.uniform(0.0, jitter_s))
            registry.mark_update(worker)
            if solved_cb is not None:
                solved_cb()

    else:
        work_rng = make_work_rng(seed * 1000003 + worker + 1)
        sink = {"checksum": 0}

        def update():
            if comm:
                registry.pump()
            sink["checksum"] ^= burn_compute(params.compute_work_units, work_rng)
            if comm:
                beat = progress.updates
                for n in nodes:
                    for o in inbound[n]:
                        o.jump()
                    for port in outbound[n]:
                        port.send(beat)
                registry.flush_pools()
            if jitter_rng is not None:
                time.sleep(jitter_rng.uniform(0.0, jitter_s))
            registry.mark_update(worker)

    return update


# -- thread locus ----------------------------------------------------------


@dataclass
class _ReplicateOutcome:
    records: List[WorkerRunRecord]
    final_conflicts: Optional[int]
    initial_conflicts: Optional[int]
    qos_records: List[WindowRecord] = field(default_factory=list)


def _run_replicate_threads(cfg: RunConfig, replicate: int, seed: int) -> _ReplicateOutcome:
    rt = _build_runtime(cfg, seed, replicate, local_rank=0, hub=None)
    barrier = GenerationBarrier(cfg.workers) if cfg.mode in (0, 1, 2) else None
    epoch_anchor = time.time()

    observer = None
    if cfg.snapshot_interval_s is not None:
        observer = SnapshotObserver(
            rt.registry.endpoint_specs(),
            duration_s=cfg.duration_s,
            interval_s=cfg.snapshot_interval_s,
            window_s=cfg.snapshot_window_s,
        )

    records: List[Optional[WorkerRunRecord]] = [None] * cfg.workers

    def drive(w: int):
        records[w] = run_update_loop(
            worker_id=w,
            mode=cfg.mode,
            update_fn=rt.update_fns[w],
            barrier=barrier,
            duration_s=cfg.duration_s,
            max_updates=cfg.max_updates,
            stop_flag=rt.stop_flag,
            chunk_s=cfg.chunk_s,
            tick_interval_s=cfg.tick_interval_s,
            epoch_anchor=epoch_anchor,
        )

    threads = [
        threading.Thread(target=drive, args=(w,), name=f"worker-{w}", daemon=True)
        for w in range(cfg.workers)
    ]
    if observer is not None:
        observer.start()
    for t in threads:
        t.start()
    # generous allowance over the nominal stop condition before declaring
    # the replicate wedged
    grace = 60.0 + 2.0 * (cfg.duration_s or 0.0)
    deadline = time.monotonic() + grace
    for t in threads:
        t.join(max(0.0, deadline - time.monotonic()))
    if any(t.is_alive() for t in threads):
        if barrier is not None:
            barrier.abort()
        raise LaunchError(f"replicate {replicate}: workers failed to stop in {grace:.0f}s")
    if observer is not None:
        observer.stop()
        observer.join(5.0)

    final_conflicts = None
    if cfg.workload == "coloring":
        topo = rt.assignment.topology
        final_conflicts = count_conflicts(
            topo, [rt.colors[n] for n in range(topo.node_count)]
        )
    return _ReplicateOutcome(
        records=list(records),
        final_conflicts=final_conflicts,
        initial_conflicts=rt.initial_conflicts,
        qos_records=list(observer.records) if observer is not None else [],
    )


# -- process locus ---------------------------------------------------------


def _tranche_to_list(t: SnapshotTranche) -> list:
    return list(dataclasses.astuple(t))


def _tranche_from_list(values: Sequence[int]) -> SnapshotTranche:
    return SnapshotTranche(*values)


def _serialize_qos(records: Sequence[WindowRecord]) -> list:
    return [
        {
            "key": r.key,
            "side": r.side,
            "worker_id": r.worker_id,
            "peer_worker": r.peer_worker,
            "window_index": r.window_index,
            "before": _tranche_to_list(r.before),
            "after": _tranche_to_list(r.after),
        }
        for r in records
    ]


def _deserialize_qos(items: Sequence[dict]) -> List[WindowRecord]:
    return [
        WindowRecord(
            key=i["key"],
            side=i["side"],
            worker_id=i["worker_id"],
            peer_worker=i["peer_worker"],
            window_index=i["window_index"],
            before=_tranche_from_list(i["before"]),
            after=_tranche_from_list(i["after"]),
        )
        for i in items
    ]


def _run_replicate_process(
    cfg: RunConfig,
    rt: _Runtime,
    epoch: float,
    *,
    server: Optional[ControlServer],
    client: Optional[ControlClient],
) -> Tuple[WorkerRunRecord, List[WindowRecord]]:
    rank = cfg.rank
    barrier = None
    if cfg.mode in (0, 1, 2):
        barrier = (
            ProcessBarrier(server=server) if rank == 0 else ProcessBarrier(client=client)
        )

    sleep_until_epoch(epoch)
    start_mono = time.monotonic()
    observer = None
    if cfg.snapshot_interval_s is not None:
        observer = SnapshotObserver(
            rt.registry.endpoint_specs(),
            duration_s=cfg.duration_s,
            interval_s=cfg.snapshot_interval_s,
            window_s=cfg.snapshot_window_s,
            start_monotonic=start_mono,
        )
        observer.start()

    record = run_update_loop(
        worker_id=rank,
        mode=cfg.mode,
        update_fn=rt.update_fns[rank],
        barrier=barrier,
        duration_s=cfg.duration_s,
        max_updates=cfg.max_updates,
        stop_flag=rt.stop_flag,
        chunk_s=cfg.chunk_s,
        tick_interval_s=cfg.tick_interval_s,
        epoch_anchor=epoch,
    )
    if observer is not None:
        observer.stop()
        observer.join(5.0)
    qos = list(observer.records) if observer is not None else []
    return record, qos


def _run_processes(cfg: RunConfig) -> "BenchResult":
    if cfg.rank is None:
        raise ConfigError(
            "rank: process locus runs one rank per invocation; pass rank "
            "or use the launcher"
        )
    rank = cfg.rank
    run_id = compute_run_id(cfg)
    hub = WireHub((cfg.host, cfg.base_port + rank))
    control_port = cfg.base_port + cfg.workers
    server = client = None
    summary_rows: List[dict] = []
    qos_rows: List[dict] = []
    try:
        if rank == 0:
            server = ControlServer(cfg.host, control_port, cfg.workers - 1)
            server.wait_for_peers()
            for rep in range(cfg.replicates):
                seed = derive_seed(cfg.master_seed, rep)
                server.broadcast({"type": "prepare", "replicate": rep, "seed": seed})
                rt = _build_runtime(cfg, seed, rep, local_rank=rank, hub=hub)
                server.collect("ready")
                epoch = time.time() + 0.3
                server.broadcast({"type": "start", "epoch": epoch})
                record, qos = _run_replicate_process(
                    cfg, rt, epoch, server=server, client=None
                )
                results = server.collect("result")

                records: List[Optional[WorkerRunRecord]] = [None] * cfg.workers
                records[0] = record
                all_qos = list(qos)
                merged_colors = dict(rt.colors)
                for peer_rank, msg in results.items():
                    rec = msg["record"]
                    records[peer_rank] = WorkerRunRecord(
                        worker_id=rec["worker_id"],
                        updates=rec["updates"],
                        wall_s=rec["wall_s"],
                        error=rec.get("error"),
                    )
                    for n, c in msg.get("colors", []):
                        merged_colors[n] = c
                    all_qos.extend(_deserialize_qos(msg.get("qos", [])))

                final_conflicts = None
                if cfg.workload == "coloring":
                    topo = rt.assignment.topology
                    final_conflicts = count_conflicts(
                        topo, [merged_colors[n] for n in range(topo.node_count)]
                    )
                outcome = _ReplicateOutcome(
                    records=list(records),
                    final_conflicts=final_conflicts,
                    initial_conflicts=rt.initial_conflicts,
                    qos_records=all_qos,
                )
                summary_rows.extend(_summary_rows(cfg, run_id, rep, seed, outcome))
                qos_rows.extend(
                    build_qos_rows(
                        all_qos, run_id=run_id, replicate=rep, mode=cfg.mode
                    )
                )
            server.broadcast({"type": "finish"})
        else:
            client = ControlClient(cfg.host, control_port, rank)
            while True:
                msg = client.recv()
                if msg.get("type") == "finish":
                    break
                if msg.get("type") != "prepare":
                    raise LaunchError(f"unexpected control message {msg.get('type')!r}")
                rep, seed = msg["replicate"], msg["seed"]
                rt = _build_runtime(cfg, seed, rep, local_rank=rank, hub=hub)
                client.send({"type": "ready", "rank": rank})
                start_msg = client.recv()
                if start_msg.get("type") != "start":
                    raise LaunchError(f"expected start, got {start_msg.get('type')!r}")
                record, qos = _run_replicate_process(
                    cfg, rt, start_msg["epoch"], server=None, client=client
                )
                client.send(
                    {
                        "type": "result",
                        "rank": rank,
                        "record": {
                            "worker_id": record.worker_id,
                            "updates": record.updates,
                            "wall_s": record.wall_s,
                            "error": record.error,
                        },
                        "colors": sorted(rt.colors.items()),
                        "qos": _serialize_qos(qos),
                    }
                )
    finally:
        if server is not None:
            server.close()
        if client is not None:
            client.close()
        hub.close()

    result = BenchResult(
        config=cfg, run_id=run_id, summary_rows=summary_rows, qos_rows=qos_rows
    )
    if rank == 0:
        _emit(cfg, result)
    return result


# -- result assembly -------------------------------------------------------


@dataclass
class BenchResult:
    config: RunConfig
    run_id: str
    summary_rows: List[dict]
    qos_rows: List[dict]


def _summary_rows(
    cfg: RunConfig,
    run_id: str,
    replicate: int,
    seed: int,
    outcome: _ReplicateOutcome,
) -> List[dict]:
    rows = []
    for record in outcome.records:
        if record is None:
            continue
        rate = record.updates / record.wall_s if record.wall_s > 0 else None
        rows.append(
            {
                "run_id": run_id,
                "replicate": replicate,
                "seed": seed,
                "workload": cfg.workload,
                "mode": cfg.mode,
                "mode_name": MODE_NAMES[cfg.mode],
                "locus": cfg.locus,
                "workers": cfg.workers,
                "worker_id": record.worker_id,
                "grid_width": cfg.grid[0],
                "grid_height": cfg.grid[1],
                "nodes_per_worker": cfg.nodes_per_worker,
                "buffer_capacity": cfg.buffer_capacity,
                "num_colors": cfg.num_colors,
                "b": cfg.b,
                "compute_work_units": cfg.compute_work_units,
                "duration_s": cfg.duration_s,
                "max_updates": cfg.max_updates,
                "updates": record.updates,
                "wall_s": record.wall_s,
                "update_rate": rate,
                "initial_conflicts": outcome.initial_conflicts,
                "final_conflicts": outcome.final_conflicts,
                "error": record.error,
                "version": __version__,
            }
        )
    return rows


def append_csv(path: str, columns: Sequence[str], rows: Sequence[dict]) -> None:
    """Append rows, writing the header only when the file starts empty."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fresh = not (os.path.exists(path) and os.path.getsize(path) > 0)
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if fresh:
            writer.writerow(columns)
        for row in rows:
            writer.writerow(
                ["" if row.get(c) is None else str(row.get(c)) for c in columns]
            )


def _emit(cfg: RunConfig, result: BenchResult) -> None:
    if cfg.summary_csv:
        append_csv(cfg.summary_csv, SUMMARY_CSV_COLUMNS, result.summary_rows)
    if cfg.qos_csv:
        append_csv(cfg.qos_csv, QOS_CSV_COLUMNS, result.qos_rows)
        meta_path = cfg.qos_csv + ".meta.json"
        with open(meta_path, "w") as f:
            json.dump(
                {"columns": list(QOS_CSV_COLUMNS), "conventions": QOS_META_NOTES},
                f,
                indent=2,
            )
            f.write("\n")


def run_benchmark(config: RunConfig) -> BenchResult:
    """Run the configured experiment and return (and optionally write) rows.

    Thread locus: runs every replicate in this process. Process locus: runs
    this invocation's rank only; rank 0 coordinates, merges and writes.
    """
    cfg = config.resolved()
    if cfg.locus == "processes":
        return _run_processes(cfg)

    run_id = compute_run_id(cfg)
    summary_rows: List[dict] = []
    qos_rows: List[dict] = []
    for rep in range(cfg.replicates):
        seed = derive_seed(cfg.master_seed, rep)
        outcome = _run_replicate_threads(cfg, rep, seed)
        summary_rows.extend(_summary_rows(cfg, run_id, rep, seed, outcome))
        qos_rows.extend(
            build_qos_rows(
                outcome.qos_records, run_id=run_id, replicate=rep, mode=cfg.mode
            )
        )
    result = BenchResult(
        config=cfg, run_id=run_id, summary_rows=summary_rows, qos_rows=qos_rows
    )
    _emit(cfg, result)
    return result
