"""laxbench: run and launch benchmark experiments from the command line.

Two subcommands:

  run     execute a configuration in this process (thread locus runs all
          workers; process locus runs the single rank given by --rank)
  launch  spawn one `run --rank i` child per worker for the process locus
          and wait for all of them

Settings merge with precedence built-in defaults < --config JSON file <
explicit flags. Invalid settings exit nonzero with a message naming the
offending key.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from typing import List, Optional, Sequence

from .bench import RunConfig, run_benchmark
from .errors import ConfigError, LaxcommError

_CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def _parse_grid(value) -> tuple:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return int(value[0]), int(value[1])
    if isinstance(value, str):
        parts = value.lower().replace("x", " ").split()
        if len(parts) == 2:
            try:
                return int(parts[0]), int(parts[1])
            except ValueError:
                pass
    raise ConfigError(f"grid: expected WIDTHxHEIGHT, got {value!r}")


def _parse_worker_list(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return ()
        try:
            return tuple(int(p) for p in value.split(","))
        except ValueError:
            pass
        raise ConfigError(f"jitter_workers: expected comma-separated ints, got {value!r}")
    raise ConfigError(f"jitter_workers: expected list, got {value!r}")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON file of settings")
    p.add_argument("--workload", choices=["coloring", "compute"])
    p.add_argument("--mode", type=int, choices=[0, 1, 2, 3, 4])
    p.add_argument("--locus", choices=["threads", "processes"])
    p.add_argument("--workers", type=int)
    p.add_argument("--grid", metavar="WxH")
    p.add_argument("--nodes-per-worker", type=int, dest="nodes_per_worker")
    p.add_argument("--buffer-capacity", type=int, dest="buffer_capacity")
    p.add_argument("--colors", type=int, dest="num_colors")
    p.add_argument("--b", type=float)
    p.add_argument("--work-units", type=int, dest="compute_work_units")
    p.add_argument("--success-reset", action="store_true", default=None,
                   dest="success_reset")
    p.add_argument("--duration", type=float, dest="duration_s")
    p.add_argument("--max-updates", type=int, dest="max_updates")
    p.add_argument("--chunk", type=float, dest="chunk_s")
    p.add_argument("--tick-interval", type=float, dest="tick_interval_s")
    p.add_argument("--snapshot-interval", type=float, dest="snapshot_interval_s")
    p.add_argument("--snapshot-window", type=float, dest="snapshot_window_s")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--jitter-ms", type=float, dest="jitter_ms",
                   help="max per-update sleep, uniform [0, ms], on --jitter-workers")
    p.add_argument("--jitter-workers", dest="jitter_workers",
                   help="comma-separated worker ids")
    p.add_argument("--stop-when-solved", action="store_true", default=None,
                   dest="stop_when_solved")
    p.add_argument("--summary-csv", dest="summary_csv")
    p.add_argument("--qos-csv", dest="qos_csv")
    p.add_argument("--host")
    p.add_argument("--base-port", type=int, dest="base_port")
    p.add_argument("--quiet", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laxbench",
        description="best-effort channel benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run in this process")
    _add_run_flags(run_p)
    run_p.add_argument("--rank", type=int, help="this invocation's rank (process locus)")
    launch_p = sub.add_parser("launch", help="spawn one process per worker")
    _add_run_flags(launch_p)
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must hold a JSON object")
    for key in data:
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown config key")
    return data


def merge_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < explicit flags, then field normalization."""
    settings: dict = {}
    if getattr(args, "config", None):
        settings.update(_load_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    jitter_ms = getattr(args, "jitter_ms", None)
    if jitter_ms is not None:
        settings["jitter_s"] = jitter_ms / 1000.0
    if "grid" in settings and settings["grid"] is not None:
        settings["grid"] = _parse_grid(settings["grid"])
    if "jitter_workers" in settings:
        settings["jitter_workers"] = _parse_worker_list(settings["jitter_workers"])
    try:
        return RunConfig(**settings)
    except TypeError as e:
        raise ConfigError(f"config: {e}") from e


def _print_result(result, quiet: bool) -> None:
    if quiet or not result.summary_rows:
        return
    cfg = result.config
    print(
        f"run {result.run_id}: {cfg.workload} mode={cfg.mode} locus={cfg.locus} "
        f"grid={cfg.grid[0]}x{cfg.grid[1]} workers={cfg.workers} "
        f"replicates={cfg.replicates}"
    )
    for row in result.summary_rows:
        rate = row["update_rate"]
        line = (
            f"  replicate {row['replicate']} worker {row['worker_id']}: "
            f"{row['updates']} updates in {row['wall_s']:.3f}s"
        )
        if rate is not None:
            line += f" ({rate:.1f}/s)"
        if row["final_conflicts"] is not None:
            line += (
                f", conflicts {row['initial_conflicts']} -> {row['final_conflicts']}"
            )
        if row["error"]:
            line += f" [error: {row['error']}]"
        print(line)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    if getattr(args, "rank", None) is not None:
        cfg.rank = args.rank
    result = run_benchmark(cfg)
    _print_result(result, bool(args.quiet))
    return 0


def _cmd_launch(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = merge_config(args)
    if cfg.locus == "threads":
        raise ConfigError("locus: launch is for the process locus; use run for threads")
    cfg.locus = "processes"
    resolved = cfg.resolved()

    child_flags = [a for a in argv[1:]]
    if "--locus" not in child_flags:
        child_flags += ["--locus", "processes"]
    procs: List[subprocess.Popen] = []
    try:
        for rank in range(resolved.workers):
            cmd = (
                [sys.executable, "-m", "laxcomm.cli", "run"]
                + child_flags
                + ["--rank", str(rank)]
            )
            procs.append(subprocess.Popen(cmd))
        codes = [p.wait() for p in procs]
    except BaseException:
        for p in procs:
            if p.poll() is None:
                p.terminate()
        raise
    failed = [(r, c) for r, c in enumerate(codes) if c != 0]
    if failed:
        detail = ", ".join(f"rank {r} exit {c}" for r, c in failed)
        print(f"launch failed: {detail}", file=sys.stderr)
        return 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_launch(args, argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except LaxcommError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
