"""Snapshot instrumentation and the five quality-of-service metrics.

An observer thread samples endpoint counters twice, about a second apart,
without pausing workers; the metrics are computed from the tranche
differences. Individual counter reads are atomic but the set is not taken
under a lock, so cross-counter tearing (photographic motion blur) can
produce small negative metric values; that is expected and preserved.

Formula conventions (stated exactly because each has more than one
plausible reading; the same statements are echoed in the .meta.json
written beside every QoS CSV):

  simstep_period      = d_walltime / d_updates            [seconds/update]
  simstep_latency     = d_updates / max(d_touches, 1)     [updates]
  walltime_latency    = simstep_latency * simstep_period  [seconds]
  delivery_failure    = (d_attempted - d_successful) / d_attempted
  delivery_clumpiness = 1 - d_laden / min(d_messages, d_pulls)
                        (0 when min(d_messages, d_pulls) == 0)

max() in the latency denominator realizes the zero-touch bound: with zero
round trips observed, latency reports the full window's updates. The
failure rate is the drop fraction written as a single quotient, which is
algebraically 1 - successful/attempted but exact for integer counter
diffs (e.g. 3 attempted, 2 successful -> exactly 1/3).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import EmptyInput, NoSendsAttempted, NoUpdatesElapsed


@dataclass(frozen=True)
class SnapshotTranche:
    """Point-in-time copy of one endpoint's counters.

    Inlet tranches zero-fill the pull-side counters and vice versa; the
    touch count of an inlet tranche is the link touch the inlet would
    bundle (its worker's counter for the peer).
    """

    capture_walltime_ns: int
    update_count: int
    touch_count: int
    message_count: int
    pull_attempt_count: int
    laden_pull_count: int
    attempted_send_count: int
    successful_send_count: int


@dataclass(frozen=True)
class SnapshotWindow:
    before: SnapshotTranche
    after: SnapshotTranche

    def __post_init__(self):
        if self.after.capture_walltime_ns <= self.before.capture_walltime_ns:
            raise ValueError("window must span forward walltime")


def simstep_period(window: SnapshotWindow) -> float:
    """Wall-time elapsed per simulation update over the window."""
    d_upd = window.after.update_count - window.before.update_count
    if d_upd <= 0:
        raise NoUpdatesElapsed(f"{d_upd} updates elapsed")
    d_wall_s = (
        window.after.capture_walltime_ns - window.before.capture_walltime_ns
    ) * 1e-9
    return d_wall_s / d_upd

def simstep_latency(window: SnapshotWindow) -> float:
    """One-way message latency in units of simulation updates.

    Touch counters advance by two per completed round trip; dividing the
    window's updates by its touches yields updates per one-way trip. Zero
    observed touches bound the result at the whole window's updates.
    """
    d_upd = window.after.update_count - window.before.update_count
    d_touch = window.after.touch_count - window.before.touch_count
    return d_upd / max(d_touch, 1)


def walltime_latency(window: SnapshotWindow) -> float:
    """simstep_latency converted to seconds via simstep_period (exact
    product of the two metrics over the same window)."""
    return simstep_latency(window) * simstep_period(window)


def delivery_failure_rate(window: SnapshotWindow) -> float:
    """Fraction of attempted sends that were dropped at the send buffer."""
    d_att = window.after.attempted_send_count - window.before.attempted_send_count
    if d_att < 1:
        raise NoSendsAttempted(f"{d_att} sends attempted")
    d_succ = window.after.successful_send_count - window.before.successful_send_count
    return (d_att - d_succ) / d_att


def delivery_clumpiness(window: SnapshotWindow) -> float:
    """Complement of delivery steadiness.

    Steadiness is the fraction of delivery opportunities that were taken:
    laden pulls over min(messages, pull attempts) - by pigeonhole, that
    minimum is the best achievable laden count. No opportunities at all
    (an idle window) counts as perfectly steady, clumpiness 0.
    """
    d_msg = window.after.message_count - window.before.message_count
    d_pull = window.after.pull_attempt_count - window.before.pull_attempt_count
    opportunities = min(d_msg, d_pull)
    if opportunities <= 0:
        return 0.0
    d_laden = window.after.laden_pull_count - window.before.laden_pull_count
    return 1.0 - d_laden / opportunities


@dataclass(frozen=True)
class QosReport:
    """The five metrics for one endpoint over one window. Fields are None
    where the window made a metric undefined (no sends attempted, etc.)."""

    simstep_period: Optional[float]
    simstep_latency: Optional[float]
    walltime_latency: Optional[float]
    delivery_failure_rate: Optional[float]
    delivery_clumpiness: Optional[float]


METRIC_NAMES = (
    "simstep_period",
    "simstep_latency",
    "walltime_latency",
    "delivery_failure_rate",
    "delivery_clumpiness",
)

# which side of a channel can derive each metric
METRIC_SIDES = {
    "simstep_period": ("inlet", "outlet"),
    "simstep_latency": ("inlet", "outlet"),
    "walltime_latency": ("inlet", "outlet"),
    "delivery_failure_rate": ("inlet",),
    "delivery_clumpiness": ("outlet",),
}

_METRIC_FNS = {
    "simstep_period": simstep_period,
    "simstep_latency": simstep_latency,
    "walltime_latency": walltime_latency,
    "delivery_failure_rate": delivery_failure_rate,
    "delivery_clumpiness": delivery_clumpiness,
}


def window_report(window: SnapshotWindow, side: str) -> QosReport:
    """Compute every metric the given side can derive; None elsewhere."""
    values = {}
    for name in METRIC_NAMES:
        if side not in METRIC_SIDES[name]:
            values[name] = None
            continue
        try:
            values[name] = _METRIC_FNS[name](window)
        except (NoUpdatesElapsed, NoSendsAttempted):
            values[name] = None
    return QosReport(**values)


def aggregate_replicate(reports: Sequence[QosReport]) -> Dict[str, Dict[str, float]]:
    """Mean and median per metric across reports, skipping undefined values.

    Median of an even-length list is the lower of the middle two: a value
    that was actually observed, deterministically.
    """
    if not reports:
        raise EmptyInput("no reports to aggregate")
    out: Dict[str, Dict[str, float]] = {}
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports]
        values = [v for v in values if v is not None]
        if not values:
            out[name] = {"mean": None, "median": None}
            continue
        values.sort()
        out[name] = {
            "mean": sum(values) / len(values),
            "median": values[(len(values) - 1) // 2],
        }
    return out


@dataclass(frozen=True)
class EndpointSpec:
    """One snapshottable endpoint: identity plus a non-blocking counter
    reader that builds a tranche stamped with the given walltime."""

    key: str
    side: str  # "inlet" | "outlet"
    worker_id: int
    peer_worker: int
    read: Callable[[int], SnapshotTranche]


@dataclass(frozen=True)
class WindowRecord:
    key: str
    side: str
    worker_id: int
    peer_worker: int
    window_index: int
    before: SnapshotTranche
    after: SnapshotTranche


def window_starts(duration_s: float, interval_s: float, window_s: float) -> List[float]:
    """Snapshot schedule: window k opens at k*interval (k >= 1) and is taken
    only if it closes by the run deadline."""
    out = []
    k = 1
    while k * interval_s + window_s <= duration_s + 1e-9:
        out.append(k * interval_s)
        k += 1
    return out


class SnapshotObserver(threading.Thread):
    """Dedicated observer thread recording tranche pairs on a schedule.

    Capture is two passes of plain attribute reads per endpoint; workers
    are never paused. The schedule is anchored to the shared run start so
    window indices align across processes.
    """

    def __init__(
        self,
        specs: Sequence[EndpointSpec],
        *,
        duration_s: float,
        interval_s: float,
        window_s: float,
        start_monotonic: Optional[float] = None,
    ):
        super().__init__(name="qos-observer", daemon=True)
        self.specs = list(specs)
        self.duration_s = duration_s
        self.interval_s = interval_s
        self.window_s = window_s
        self.start_monotonic = (
            time.monotonic() if start_monotonic is None else start_monotonic
        )
        self.records: List[WindowRecord] = []
        self._halt = threading.Event()

    def _capture_all(self) -> List[SnapshotTranche]:
        now_ns = int((time.monotonic() - self.start_monotonic) * 1e9)
        return [spec.read(now_ns) for spec in self.specs]

    def _sleep_until(self, offset_s: float) -> bool:
        while not self._halt.is_set():
            remaining = (self.start_monotonic + offset_s) - time.monotonic()
            if remaining <= 0:
                return True
            self._halt.wait(min(remaining, 0.05))
        return False

    def run(self):
        for index, start in enumerate(
            window_starts(self.duration_s, self.interval_s, self.window_s), start=1
        ):
            if not self._sleep_until(start):
                return
            before = self._capture_all()
            if not self._sleep_until(start + self.window_s):
                return
            after = self._capture_all()
            for spec, b, a in zip(self.specs, before, after):
                if a.capture_walltime_ns <= b.capture_walltime_ns:
                    continue
                self.records.append(
                    WindowRecord(
                        key=spec.key,
                        side=spec.side,
                        worker_id=spec.worker_id,
                        peer_worker=spec.peer_worker,
                        window_index=index,
                        before=b,
                        after=a,
                    )
                )

    def stop(self):
        self._halt.set()


# -- CSV row assembly ----------------------------------------------------

QOS_CSV_COLUMNS = [
    "run_id",
    "replicate",
    "mode",
    "worker_id",
    "peer_worker",
    "endpoint",
    "window_index",
]
for _name in METRIC_NAMES:
    for _variant in ("inlet", "outlet", "mean"):
        QOS_CSV_COLUMNS.append(f"{_name}_{_variant}")

QOS_META_NOTES = {
    "simstep_period": "seconds of walltime per update (walltime diff / update "
    "diff), i.e. the reciprocal of an update rate",
    "simstep_latency": "update diff / max(touch diff, 1); the max keeps a "
    "silent link pinned at the update diff instead of dividing by zero",
    "delivery_failure_rate": "computed as the drop fraction "
    "(attempted - successful) / attempted",
    "variants": "inlet-derived values come from sender-side counters, "
    "outlet-derived from receiver-side; failure rate is inlet-only and "
    "clumpiness outlet-only; mean averages the defined sides",
    "median": "even-length medians take the lower of the middle two",
}


def build_qos_rows(
    records: Sequence[WindowRecord],
    *,
    run_id: str,
    replicate: int,
    mode: int,
) -> List[Dict[str, object]]:
    """Join inlet-side and outlet-side window records per (channel, window)
    into CSV rows carrying inlet / outlet / mean variants of each metric."""
    grouped: Dict[Tuple[str, int], Dict[str, WindowRecord]] = {}
    for rec in records:
        grouped.setdefault((rec.key, rec.window_index), {})[rec.side] = rec

    rows = []
    for (key, window_index), sides in sorted(grouped.items()):
        if "inlet" in sides:
            worker_id = sides["inlet"].worker_id
            peer = sides["inlet"].peer_worker
        else:
            worker_id = sides["outlet"].peer_worker
            peer = sides["outlet"].worker_id
        row: Dict[str, object] = {
            "run_id": run_id,
            "replicate": replicate,
            "mode": mode,
            "worker_id": worker_id,
            "peer_worker": peer,
            "endpoint": key,
            "window_index": window_index,
        }
        reports = {}
        for side, rec in sides.items():
            reports[side] = window_report(SnapshotWindow(rec.before, rec.after), side)
        for name in METRIC_NAMES:
            inlet_v = getattr(reports["inlet"], name) if "inlet" in reports else None
            outlet_v = getattr(reports["outlet"], name) if "outlet" in reports else None
            defined = [v for v in (inlet_v, outlet_v) if v is not None]
            row[f"{name}_inlet"] = inlet_v
            row[f"{name}_outlet"] = outlet_v
            row[f"{name}_mean"] = sum(defined) / len(defined) if defined else None
        rows.append(row)
    return rows


def mean_reports_from_rows(rows: Sequence[Dict[str, object]]) -> List[QosReport]:
    """Lift CSV rows back into QosReports using the mean variant columns."""
    out = []
    for row in rows:
        out.append(
            QosReport(
                **{name: row.get(f"{name}_mean") for name in METRIC_NAMES}
            )
        )
    return out
