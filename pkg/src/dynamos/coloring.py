"""Synchronous threshold coloring process (no decontamination).

Each white vertex turns black once at least ``psi[v]`` of its neighbours are
black; parallel edges count with multiplicity and loops never count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph_core import GraphError, SeedSet, TorusGraph, as_mask, distance_to_set

DEFAULT_THRESHOLD = 2


@dataclass(frozen=True, eq=False)
class ColoringRun:
    activation_time: Optional[np.ndarray]  # int64, -1 = never black; None when not recorded
    steps_to_fixpoint: int
    frontier_sizes: list[int]
    is_dynamo: bool
    final_black: np.ndarray

    @property
    def black_fraction(self) -> float:
        return float(self.final_black.mean()) if self.final_black.size else 1.0

    def black_at(self, i: int) -> np.ndarray:
        if self.activation_time is None:
            raise ValueError("run was executed without record_times")
        t = self.activation_time
        return (t >= 0) & (t <= i)


def threshold_map(g, psi=DEFAULT_THRESHOLD) -> np.ndarray:
    n = g.vertex_count
    arr = np.broadcast_to(np.asarray(psi, dtype=np.int64), (n,)).copy()
    if np.any(arr < 1):
        raise GraphError("thresholds must be >= 1")
    return arr


def _gather(g, frontier: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sources and targets of all edge entries leaving ``frontier``."""
    if isinstance(g, TorusGraph):
        tab = g.neighbor_table
        return np.repeat(frontier, tab.shape[1]), tab[frontier].reshape(-1)
    indptr, indices = g.indptr, g.indices
    starts = indptr[frontier]
    lens = indptr[frontier + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return frontier[:0], frontier[:0]
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    return np.repeat(frontier, lens), indices[offsets]


def step(g, black, psi=DEFAULT_THRESHOLD) -> np.ndarray:
    """One synchronous step by a full scan over every vertex."""
    n = g.vertex_count
    black = as_mask(black, n)
    psi = threshold_map(g, psi)
    src = np.flatnonzero(black)
    s, t = _gather(g, src)
    keep = s != t
    counts = np.bincount(t[keep], minlength=n)
    return black | (counts >= psi)


def run(g, seeds, psi=DEFAULT_THRESHOLD, record_times: bool = True,
        stop_when_stuck: bool = False) -> ColoringRun:
    """Iterate to the fixpoint, re-testing only neighbours of newly black vertices.

    Residual counters make a full run O(edges).
    """
    n = g.vertex_count
    black = as_mask(seeds, n).copy()
    psi = threshold_map(g, psi)
    count = np.zeros(n, dtype=np.int64)
    times = np.full(n, -1, dtype=np.int64) if record_times else None
    frontier = np.flatnonzero(black)
    if times is not None:
        times[frontier] = 0
    sizes = [int(frontier.size)]
    n_black = int(frontier.size)
    i = 0
    while frontier.size and n_black < n:
        s, t = _gather(g, frontier)
        t = t[s != t]
        t = t[~black[t]]
        if t.size == 0:
            break
        np.add.at(count, t, 1)
        cand = np.unique(t)
        new = cand[count[cand] >= psi[cand]]
        if new.size == 0:
            break
        i += 1
        black[new] = True
        if times is not None:
            times[new] = i
        sizes.append(int(new.size))
        n_black += int(new.size)
        frontier = new
    return ColoringRun(times, i, sizes, n_black == n, black)


def is_dynamo(g, seeds, psi=DEFAULT_THRESHOLD) -> bool:
    return run(g, seeds, psi, record_times=False).is_dynamo


def run_naive(g, seeds, psi=DEFAULT_THRESHOLD) -> ColoringRun:
    """Reference implementation built on repeated full-scan ``step`` calls."""
    n = g.vertex_count
    black = as_mask(seeds, n).copy()
    times = np.where(black, 0, -1).astype(np.int64)
    sizes = [int(black.sum())]
    i = 0
    while True:
        nxt = step(g, black, psi)
        new = nxt & ~black
        if not new.any():
            break
        i += 1
        times[new] = i
        sizes.append(int(new.sum()))
        black = nxt
    return ColoringRun(times, i, sizes, bool(black.all()), black)


def check_influence_bound(t: TorusGraph, base_seeds, extra, psi=DEFAULT_THRESHOLD) -> bool:
    """Vertices turning black after the base run's fixpoint time ``u`` lie within ``2u`` of ``extra``."""
    n = t.vertex_count
    base = as_mask(base_seeds, n)
    ext = as_mask(extra, n)
    if np.any(base & ext):
        raise GraphError("base seeds and extra seeds must be disjoint")
    if not ext.any():
        return True
    t_star = run(t, base, psi, record_times=False).steps_to_fixpoint
    combined = run(t, base | ext, psi)
    times = combined.activation_time
    late = times > t_star
    if not late.any():
        return True
    dist = distance_to_set(t, ext)
    return bool(np.all(dist[late] <= 2 * times[late]))


__all__ = [
    "ColoringRun", "DEFAULT_THRESHOLD", "check_influence_bound", "is_dynamo",
    "run", "run_naive", "step", "threshold_map", "SeedSet",
]
