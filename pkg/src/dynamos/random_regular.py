"""Configuration (pairing) model for random d-regular multigraphs.

Slot ``s`` belongs to vertex ``s // d``.  A :class:`PairingState` can be
completed eagerly (:func:`sample_pairing`) or lazily, one partner at a time,
with :meth:`PairingState.reveal_partner`; the partner is always drawn
uniformly from the slots still unpaired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .graph_core import AdjacencyGraph
from .rng import substream

DEFAULT_RETRY_CAP = 10_000


class PairingError(ValueError):
    pass


class RetryCapExceeded(RuntimeError):
    pass


@numba.njit(cache=True)
def _reveal_slots(slots, uniforms, ui, partner, pool, pos, size):
    """Pair every still-unpaired slot of ``slots`` in order; return new pool size, draws used, pairs."""
    out = np.empty((slots.size, 2), dtype=np.int64)
    k = 0
    for s in slots:
        if partner[s] >= 0:
            continue
        if size < 2:
            return -1, ui, out[:k]
        # remove s from the pool
        j = pos[s]
        last = pool[size - 1]
        pool[j] = last
        pos[last] = j
        pos[s] = -1
        size -= 1
        j = int(uniforms[ui] * size)
        ui += 1
        t = pool[j]
        last = pool[size - 1]
        pool[j] = last
        pos[last] = j
        pos[t] = -1
        size -= 1
        partner[s] = t
        partner[t] = s
        out[k, 0] = s
        out[k, 1] = t
        k += 1
    return size, ui, out[:k]


class PairingState:
    """Partial perfect matching over the ``d * n`` slots."""

    def __init__(self, vertex_count: int, degree: int, rng: np.random.Generator | None = None):
        if vertex_count < 1 or degree < 0:
            raise PairingError("need n >= 1 and d >= 0")
        if (vertex_count * degree) % 2:
            raise PairingError("d * n must be even")
        self.vertex_count = vertex_count
        self.degree = degree
        total = vertex_count * degree
        self.partner = np.full(total, -1, dtype=np.int64)
        self.pool = np.arange(total, dtype=np.int64)
        self.pos = np.arange(total, dtype=np.int64)
        self.pool_size = total
        self.rng = rng if rng is not None else np.random.default_rng()

    @property
    def slot_count(self) -> int:
        return self.partner.size

    @property
    def unpaired_pool(self) -> set[int]:
        return set(self.pool[:self.pool_size].tolist())

    @property
    def is_complete(self) -> bool:
        return self.pool_size == 0

    def pairs(self) -> list[tuple[int, int]]:
        s = np.flatnonzero(self.partner >= 0)
        s = s[s < self.partner[s]]
        return list(zip(s.tolist(), self.partner[s].tolist()))

    def vertex_of(self, slot: int) -> int:
        return slot // self.degree

    def reveal_partner(self, slot: int) -> int:
        if not 0 <= slot < self.slot_count:
            raise PairingError(f"slot {slot} out of range")
        if self.partner[slot] >= 0:
            raise PairingError(f"slot {slot} is already paired")
        if self.pool_size < 2:
            raise PairingError("no other unpaired slot left")
        u = np.array([self.rng.random()])
        size, _, pairs = _reveal_slots(np.array([slot], dtype=np.int64), u, 0,
                                       self.partner, self.pool, self.pos, self.pool_size)
        self.pool_size = size
        return int(pairs[0, 1])

    def reveal_slots(self, slots: np.ndarray) -> np.ndarray:
        """Reveal partners for every still-unpaired slot of ``slots`` in the given order.

        Returns the ``(k, 2)`` array of new pairs ``(slot, partner)``.
        """
        slots = np.ascontiguousarray(slots, dtype=np.int64)
        if slots.size == 0:
            return np.empty((0, 2), dtype=np.int64)
        uniforms = self.rng.random(slots.size)
        size, _, pairs = _reveal_slots(slots, uniforms, 0, self.partner, self.pool,
                                       self.pos, self.pool_size)
        if size < 0:
            raise PairingError("pool exhausted")
        self.pool_size = size
        return pairs

    def complete(self) -> "PairingState":
        while self.pool_size:
            self.reveal_slots(self.pool[:self.pool_size].copy())
        return self


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_pairing(n: int, d: int, seed=None) -> PairingState:
    """Uniform perfect matching of the ``d * n`` slots via one random permutation."""
    state = PairingState(n, d, _as_rng(seed))
    perm = state.rng.permutation(n * d)
    a, b = perm[0::2], perm[1::2]
    state.partner[a] = b
    state.partner[b] = a
    state.pos[:] = -1
    state.pool_size = 0
    return state


def pairing_to_multigraph(p: PairingState) -> AdjacencyGraph:
    if not p.is_complete:
        raise PairingError("pairing is incomplete")
    d, n = p.degree, p.vertex_count
    if d == 0:
        return AdjacencyGraph(np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64))
    # slot-ordered CSR: entry for slot s is the vertex owning s's partner
    indices = p.partner // d
    indptr = np.arange(0, n * d + 1, d, dtype=np.int64)
    return AdjacencyGraph(indptr, indices)


def is_simple(g: AdjacencyGraph) -> bool:
    n = g.vertex_count
    src = np.repeat(np.arange(n), g.degrees())
    dst = g.indices
    if np.any(src == dst):
        return False
    keys = src * n + dst
    return np.unique(keys).size == keys.size


def _batch_simple(perms: np.ndarray, d: int, n: int) -> np.ndarray:
    a = perms[:, 0::2] // d
    b = perms[:, 1::2] // d
    loops = (a == b).any(axis=1)
    keys = np.sort(np.minimum(a, b) * n + np.maximum(a, b), axis=1)
    multi = (np.diff(keys, axis=1) == 0).any(axis=1)
    return ~(loops | multi)


@dataclass(frozen=True)
class SimpleSample:
    graph: AdjacencyGraph
    attempts: int


def sample_simple_regular(n: int, d: int, seed=None, retry_cap: int = DEFAULT_RETRY_CAP) -> SimpleSample:
    """Rejection-sample pairings until the multigraph is simple."""
    if (n * d) % 2:
        raise PairingError("d * n must be even")
    rng = _as_rng(seed)
    for attempt in range(1, retry_cap + 1):
        g = pairing_to_multigraph(sample_pairing(n, d, rng))
        if is_simple(g):
            return SimpleSample(g, attempt)
    raise RetryCapExceeded(f"no simple {d}-regular graph on {n} vertices after {retry_cap} attempts")


@dataclass(frozen=True)
class RateEstimate:
    successes: int
    trials: int
    point: float
    ci_low: float
    ci_high: float


def estimate_simplicity_rate(n: int, d: int, trials: int, seed: int = 0,
                             batch: int = 500) -> RateEstimate:
    """Fraction of uniform pairings whose multigraph is simple, with a Wilson 95% interval.

    Batch ``k`` draws from substream ``(seed, k)`` so results do not depend on scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if (n * d) % 2:
        raise PairingError("d * n must be even")
    hits = 0
    base = np.arange(n * d)
    for k, start in enumerate(range(0, trials, batch)):
        rows = min(batch, trials - start)
        rng = substream(seed, k, "graph")
        perms = rng.permuted(np.broadcast_to(base, (rows, base.size)), axis=1)
        hits += int(_batch_simple(perms, d, n).sum())
    lo, hi = proportion_confint(hits, trials, alpha=0.05, method="wilson")
    return RateEstimate(hits, trials, hits / trials, float(lo), float(hi))


def simplicity_rate_limit(d: int) -> float:
    return float(np.exp((1 - d * d) / 4))
