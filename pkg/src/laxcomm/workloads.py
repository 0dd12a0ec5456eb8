"""Benchmark workloads: distributed graph coloring and a compute knob.

The coloring rule is communication-free learning: every node keeps a
selection probability per color. Seeing a conflict multiplicatively decays
the current color's probability, redistributes the decayed mass evenly
over the other colors, and resamples; seeing no conflict changes nothing.
Nodes always transmit their current color and consume whatever neighbor
colors happen to be the latest known, so the rule tolerates staleness and
loss by construction.

burn_compute is the tunable cost knob: one PRNG draw per unit of work,
folded into a checksum so the loop cannot be elided. A unit costs tens of
nanoseconds and scales linearly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from random import Random
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InvalidTopology
from .topology import Direction, TorusTopology


@dataclass
class WorkloadParams:
    num_colors: int = 3
    b: float = 0.1  # multiplicative learning factor
    compute_work_units: int = 0
    # on a conflict-free update, optionally reset probability mass onto the
    # current color (a variant of the underlying algorithm; default off)
    success_reset: bool = False

    def __post_init__(self):
        if not (0.0 < self.b < 1.0):
            raise ValueError("b must be in (0, 1)")
        if self.num_colors < 2:
            raise ValueError("num_colors must be >= 2")
        if self.compute_work_units < 0:
            raise ValueError("compute_work_units must be >= 0")


def node_rng(run_seed: int, node_id: int) -> np.random.Generator:
    """Counter-based per-node stream: independent across nodes, identical
    across runs and worker layouts for a fixed (run_seed, node_id)."""
    key = (run_seed & 0xFFFFFFFFFFFFFFFF, node_id & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class ColoringNodeState:
    node_id: int
    current_color: int
    probabilities: List[float]
    rng: np.random.Generator = field(repr=False)


def init_node(rng: np.random.Generator, num_colors: int, node_id: int = -1) -> ColoringNodeState:
    """Uniform random initial color, uniform selection probabilities."""
    color = int(rng.integers(num_colors))
    probs = [1.0 / num_colors] * num_colors
    return ColoringNodeState(node_id=node_id, current_color=color, probabilities=probs, rng=rng)


def initial_color(run_seed: int, node_id: int, num_colors: int) -> int:
    """The color init_node would draw for this node; computable anywhere."""
    return int(node_rng(run_seed, node_id).integers(num_colors))


def _sample(probs: Sequence[float], u: float) -> int:
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def coloring_update(
    node: ColoringNodeState,
    neighbor_colors: Sequence[int],
    params: WorkloadParams,
) -> int:
    """One CFL step against the latest-known neighbor colors.

    Conflict: decay the current color's probability by (1-b), give every
    other color the decayed complement share b/(C-1), then resample the
    current color from the updated distribution. The vector stays
    normalized exactly: (1-b)*sum(p) + b = 1. No conflict: state is left
    untouched (unless success_reset collapses mass onto the survivor).
    Returns the color to transmit, which is always the current one.
    """
    cur = node.current_color
    conflict = any(c == cur for c in neighbor_colors)
    if conflict:
        b = params.b
        share = b / (params.num_colors - 1)
        probs = node.probabilities
        for j in range(len(probs)):
            if j == cur:
                probs[j] = (1.0 - b) * probs[j]
            else:
                probs[j] = (1.0 - b) * probs[j] + share
        u = float(node.rng.random())
        node.current_color = _sample(probs, u)
    elif params.success_reset:
        probs = node.probabilities
        for j in range(len(probs)):
            probs[j] = 1.0 if j == cur else 0.0
    return node.current_color


def require_coloring_topology(topology: TorusTopology) -> None:
    """The coloring workload needs real neighbors: a 1-wide or 1-tall torus
    wraps a node onto itself, making self-conflict undefined."""
    if topology.width < 2 or topology.height < 2:
        raise InvalidTopology(
            f"coloring needs width and height >= 2, got "
            f"{topology.width}x{topology.height}"
        )


def count_conflicts(topology: TorusTopology, colors: Sequence[int]) -> int:
    """Undirected edges whose endpoints share a color.

    Each node contributes its right and down slots, which enumerates all
    2*w*h undirected edges exactly once (parallel edges on 2-wide or
    2-tall tori count with multiplicity).
    """
    conflicts = 0
    for node in range(topology.node_count):
        c = colors[node]
        if colors[topology.neighbor(node, Direction.RIGHT)] == c:
            conflicts += 1
        if colors[topology.neighbor(node, Direction.DOWN)] == c:
            conflicts += 1
    return conflicts


def make_work_rng(seed: int) -> Random:
    return Random(seed)


def burn_compute(work_units: int, rng: Random) -> int:
    """Advance the PRNG work_units times, folding draws into a checksum.

    The checksum (rotate-xor over 32-bit draws) makes the loop's output
    observable, so the work cannot be optimized away; cost is strictly
    linear in work_units.
    """
    checksum = 0
    getbits = rng.getrandbits
    for _ in range(work_units):
        checksum = ((checksum << 5) ^ (checksum >> 27) ^ getbits(32)) & 0xFFFFFFFFFFFFFFFF
    return checksum


def derive_seed(master_seed: int, replicate: int) -> int:
    """Replicate seeds: hashed, so nearby master seeds do not correlate."""
    digest = hashlib.sha256(f"{master_seed}:{replicate}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
