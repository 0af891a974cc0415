"""Graph representations: generic multigraphs and the toroidal mesh.

Torus vertices are addressed as ``V[x, y]`` with flat index ``x * n + y``.
Every module relies on this layout, so state arrays can be reshaped to an
``(n, n)`` grid with ``mask.reshape(n, n)[x, y]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid graph, rectangle or seed-set arguments."""


@dataclass(frozen=True, eq=False)
class AdjacencyGraph:
    """Finite multigraph in CSR form.

    ``indices[indptr[v]:indptr[v + 1]]`` is the neighbour multiset of ``v``.
    Parallel edges are repeated and a loop lists its vertex twice.
    """

    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if indptr.ndim != 1 or indptr.size == 0 or indptr[0] != 0:
            raise GraphError("indptr must be a 1-d array starting at 0")
        if np.any(np.diff(indptr) < 0) or indptr[-1] != indices.size:
            raise GraphError("indptr inconsistent with indices")
        n = indptr.size - 1
        if indices.size and (indices.min() < 0 or indices.max() >= n):
            raise GraphError("neighbour index out of range")
        if indices.size % 2:
            raise GraphError("odd number of adjacency entries (handshake violated)")
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)

    @classmethod
    def from_lists(cls, adjacency: Sequence[Iterable[int]]) -> "AdjacencyGraph":
        lists = [list(a) for a in adjacency]
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in lists])
        flat = [v for a in lists for v in a]
        return cls(indptr, np.asarray(flat, dtype=np.int64))

    @classmethod
    def from_edges(cls, vertex_count: int, edges: Iterable[tuple[int, int]]) -> "AdjacencyGraph":
        """Build from an edge list; ``(v, v)`` is a loop."""
        adj: list[list[int]] = [[] for _ in range(vertex_count)]
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        return cls.from_lists(adj)

    @property
    def vertex_count(self) -> int:
        return self.indptr.size - 1

    @property
    def edge_count(self) -> int:
        return self.indices.size // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def adjacency_lists(self) -> list[list[int]]:
        return [self.neighbors(v).tolist() for v in range(self.vertex_count)]


@dataclass(frozen=True)
class Rectangle:
    """``V[x, y, w, h]``: vertices ``V[x + a mod n, y + b mod n]``, ``a < w``, ``b < h``."""

    x: int
    y: int
    w: int
    h: int

    def is_line(self) -> bool:
        return self.w == 1 or self.h == 1

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True, eq=False)
class TorusGraph:
    """The ``n x n`` toroidal mesh."""

    side: int

    def __post_init__(self):
        # side 2 is only produced internally by coarsen(); make_torus rejects it
        if self.side < 2:
            raise GraphError("torus side must be >= 2")

    @property
    def vertex_count(self) -> int:
        return self.side * self.side

    def index(self, x: int, y: int) -> int:
        n = self.side
        return (x % n) * n + (y % n)

    def coords(self, v: int) -> tuple[int, int]:
        return divmod(int(v), self.side)

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """``(n*n, 4)`` array: neighbours (x-1, y), (x+1, y), (x, y-1), (x, y+1)."""
        n = self.side
        x, y = np.divmod(np.arange(n * n, dtype=np.int64), n)
        table = np.stack([
            ((x - 1) % n) * n + y,
            ((x + 1) % n) * n + y,
            x * n + (y - 1) % n,
            x * n + (y + 1) % n,
        ], axis=1)
        table.setflags(write=False)
        return table

    @property
    def indptr(self) -> np.ndarray:
        return np.arange(0, 4 * self.vertex_count + 1, 4, dtype=np.int64)

    @property
    def indices(self) -> np.ndarray:
        return self.neighbor_table.reshape(-1)

    @property
    def edge_count(self) -> int:
        return 2 * self.vertex_count

    def neighbors(self, v: int) -> np.ndarray:
        return self.neighbor_table[v]

    def to_adjacency(self) -> AdjacencyGraph:
        return AdjacencyGraph(self.indptr, self.indices)


@dataclass(frozen=True, eq=False)
class SeedSet:
    """Initially black vertices, held as a read-only boolean mask."""

    mask: np.ndarray
    p: Optional[float] = None
    rng_seed: Optional[int] = None

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool, copy=True).reshape(-1)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, vertex_count: int, members: Iterable[int], **provenance) -> "SeedSet":
        mask = np.zeros(vertex_count, dtype=bool)
        idx = np.fromiter((int(v) for v in members), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= vertex_count):
            raise GraphError("seed index out of range")
        mask[idx] = True
        return cls(mask, **provenance)

    @classmethod
    def empty(cls, vertex_count: int) -> "SeedSet":
        return cls(np.zeros(vertex_count, dtype=bool))

    @classmethod
    def full(cls, vertex_count: int) -> "SeedSet":
        return cls(np.ones(vertex_count, dtype=bool))

    @property
    def vertex_count(self) -> int:
        return self.mask.size

    @property
    def members(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.mask).tolist())

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __contains__(self, v: int) -> bool:
        return bool(self.mask[v])

    def union(self, other: "SeedSet") -> "SeedSet":
        return SeedSet(self.mask | other.mask)


def as_mask(seeds, vertex_count: int) -> np.ndarray:
    """Coerce a SeedSet, boolean mask or index collection to a boolean mask."""
    if isinstance(seeds, SeedSet):
        mask = seeds.mask
    else:
        arr = np.asarray(seeds if not isinstance(seeds, (set, frozenset)) else sorted(seeds))
        if arr.dtype == bool:
            mask = arr.reshape(-1)
        else:
            mask = np.zeros(vertex_count, dtype=bool)
            if arr.size:
                mask[arr.astype(np.int64).reshape(-1)] = True
    if mask.size != vertex_count:
        raise GraphError(f"seed mask has size {mask.size}, graph has {vertex_count} vertices")
    return mask


def make_torus(n: int) -> TorusGraph:
    if n < 3:
        raise GraphError("torus side must be >= 3 (smaller sides create parallel edges)")
    return TorusGraph(n)


def _check_rectangle(t: TorusGraph, r: Rectangle) -> None:
    n = t.side
    if not (1 <= r.w <= n and 1 <= r.h <= n):
        raise GraphError(f"rectangle {r} does not fit a torus of side {n}")


def rectangle_grid(t: TorusGraph, r: Rectangle) -> np.ndarray:
    """``(w, h)`` array of flat indices; entry ``[a, b]`` is ``V[x + a, y + b]``."""
    _check_rectangle(t, r)
    n = t.side
    xs = (r.x + np.arange(r.w)) % n
    ys = (r.y + np.arange(r.h)) % n
    return xs[:, None] * n + ys[None, :]


def rectangle_vertices(t: TorusGraph, r: Rectangle) -> list[int]:
    return rectangle_grid(t, r).reshape(-1).tolist()


def circumference_mask(t: TorusGraph, r: Rectangle) -> np.ndarray:
    """Boolean ``(w, h)`` mask of rectangle cells whose induced degree is below 4."""
    grid = rectangle_grid(t, r)
    inside = np.zeros(t.vertex_count, dtype=bool)
    inside[grid.reshape(-1)] = True
    deg = inside[t.neighbor_table[grid.reshape(-1)]].sum(axis=1)
    return (deg < 4).reshape(grid.shape)


def circumference(t: TorusGraph, r: Rectangle) -> list[int]:
    grid = rectangle_grid(t, r)
    return grid[circumference_mask(t, r)].tolist()


def coarsen(t: TorusGraph, s) -> tuple[TorusGraph, SeedSet]:
    """Collapse 2x2 blocks: ``V'[x, y]`` is a seed iff any vertex of its block is."""
    n = t.side
    if n % 2:
        raise GraphError("coarsening needs an even torus side")
    m = n // 2
    grid = as_mask(s, t.vertex_count).reshape(n, n)
    coarse = grid.reshape(m, 2, m, 2).any(axis=(1, 3))
    return TorusGraph(m), SeedSet(coarse.reshape(-1))


def torus_distance(t: TorusGraph, u: int, v: int) -> int:
    n = t.side
    (ux, uy), (vx, vy) = t.coords(u), t.coords(v)
    dx, dy = abs(ux - vx), abs(uy - vy)
    return min(dx, n - dx) + min(dy, n - dy)


def distance_to_set(t: TorusGraph, sources) -> np.ndarray:
    """Wrap-aware L1 distance from every vertex to the nearest source (``inf`` if none)."""
    n = t.side
    src = np.flatnonzero(as_mask(sources, t.vertex_count))
    out = np.full(t.vertex_count, np.inf)
    if src.size == 0:
        return out
    x, y = np.divmod(np.arange(n * n), n)
    for start in range(0, src.size, 256):
        sx, sy = np.divmod(src[start:start + 256], n)
        dx = np.abs(x[:, None] - sx[None, :])
        dy = np.abs(y[:, None] - sy[None, :])
        d = np.minimum(dx, n - dx) + np.minimum(dy, n - dy)
        np.minimum(out, d.min(axis=1), out=out)
    return out
