"""Sampling-Coloring: the coloring process on a random 4-regular multigraph
whose edges are revealed only when a vertex turns black.

Per round, every unrevealed slot of the newly black set ``B`` is paired with a
uniformly chosen free slot.  White vertices are then split by the number of
fresh black edges they received:

* untouched (``R``) with >= 2 hits  -> black next round  (T1)
* one-hit (``M``)    with >= 1 hit  -> black next round  (T2)
* untouched (``R``) with exactly 1  -> joins ``M``       (T3)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import ks_2samp
from statsmodels.stats.proportion import proportions_ztest

from .bounds import sc_recurrence
from .coloring import run as run_coloring
from .random_regular import PairingState, pairing_to_multigraph, sample_pairing
from .rng import substream

R, M, B, OLD = 0, 1, 2, 3


class SCInvariantError(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class SCResult:
    is_dynamo: bool
    b: np.ndarray   # |B_i|
    m: np.ndarray   # |M_i|
    r: np.ndarray   # |R_i|
    n: int
    revealed_pairs: int

    @property
    def steps(self) -> int:
        return self.b.size - 1

    @property
    def black_fraction(self) -> float:
        return float(self.b.sum()) / self.n

    def fractions(self) -> dict[str, np.ndarray]:
        return {"b": self.b / self.n, "m": self.m / self.n, "r": self.r / self.n}

    def to_csv(self) -> str:
        f = self.fractions()
        lines = ["step,b,m,r"]
        for i in range(self.b.size):
            lines.append(f"{i},{f['b'][i]:.17g},{f['m'][i]:.17g},{f['r'][i]:.17g}")
        lines.append(f"# verdict: {'dynamo' if self.is_dynamo else 'not-dynamo'}")
        return "\n".join(lines) + "\n"


def _audit(state: PairingState, status: np.ndarray) -> None:
    d = state.degree
    partner = state.partner
    paired = np.flatnonzero(partner >= 0)
    owner = paired // d
    other = partner[paired] // d
    black_edge = (status[other] >= B) & (status[owner] < B)
    hits = np.bincount(owner[black_edge], minlength=status.size)
    if np.any(hits[status == M] != 1) or np.any(hits[status == R] != 0):
        raise SCInvariantError("M/R classification disagrees with revealed edges")
    if state.pool_size + paired.size != state.slot_count:
        raise SCInvariantError("slot accounting broken")


def run_sc(n: int, p: float, seed=None, *, seeds: Optional[np.ndarray] = None,
           graph_rng: Optional[np.random.Generator] = None, d: int = 4,
           audit: bool = False) -> SCResult:
    """Run the SC algorithm; ``seeds``/``graph_rng`` override sampling from ``seed``."""
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ValueError("need n >= 1 and p in [0, 1]")
    if seeds is None or graph_rng is None:
        rng = np.random.default_rng(seed)
        if seeds is None:
            seeds = rng.random(n) < p
        graph_rng = graph_rng or rng
    state = PairingState(n, d, graph_rng)
    status = np.full(n, R, dtype=np.int8)
    frontier = np.flatnonzero(seeds)
    status[frontier] = B
    n_m = 0
    n_r = n - frontier.size
    bs, ms, rs = [frontier.size], [0], [n_r]
    offsets = np.arange(d)
    while frontier.size:
        if audit:
            _audit(state, status)
        slots = (frontier[:, None] * d + offsets).reshape(-1)
        pairs = state.reveal_slots(slots)
        w = pairs[:, 1] // d
        w = w[status[w] <= M]
        status[frontier] = OLD
        if w.size:
            verts, hits = np.unique(w, return_counts=True)
            st = status[verts]
            t1 = verts[(st == R) & (hits >= 2)]
            t2 = verts[st == M]
            t3 = verts[(st == R) & (hits == 1)]
        else:
            t1 = t2 = t3 = w
        frontier = np.union1d(t1, t2)
        status[frontier] = B
        status[t3] = M
        n_m += t3.size - t2.size
        n_r -= t1.size + t3.size
        bs.append(frontier.size)
        ms.append(n_m)
        rs.append(n_r)
    if audit:
        _audit(state, status)
    # B empty: all black only if no white vertex is left in R or M
    return SCResult(n_r == 0 and n_m == 0, np.array(bs), np.array(ms), np.array(rs), n,
                    int(np.count_nonzero(state.partner >= 0)) // 2)


@dataclass(frozen=True)
class CrossValidation:
    sc_frequency: float
    eager_frequency: float
    p_value: float
    ks_p_value: float
    trials: int


def eager_trial(n: int, p: float, seeds: np.ndarray, graph_rng: np.random.Generator, d: int = 4):
    g = pairing_to_multigraph(sample_pairing(n, d, graph_rng))
    return run_coloring(g, seeds, record_times=False)


def cross_validate(n: int, p: float, trials: int, seed: int = 0) -> CrossValidation:
    """Compare dynamo frequency and final black fraction of SC against the eager pipeline."""
    if n > 2000:
        raise ValueError("eager comparison limited to n <= 2000")
    sc_hits, eager_hits = 0, 0
    sc_frac, eager_frac = [], []
    for i in range(trials):
        seeds = substream(seed, 2 * i, "seeds").random(n) < p
        res = run_sc(n, p, seeds=seeds, graph_rng=substream(seed, 2 * i, "graph"))
        sc_hits += res.is_dynamo
        sc_frac.append(res.black_fraction)
        seeds = substream(seed, 2 * i + 1, "seeds").random(n) < p
        out = eager_trial(n, p, seeds, substream(seed, 2 * i + 1, "graph"))
        eager_hits += out.is_dynamo
        eager_frac.append(out.black_fraction)
    if sc_hits == eager_hits or (sc_hits + eager_hits) in (0, 2 * trials):
        pval = 1.0
    else:
        _, pval = proportions_ztest([sc_hits, eager_hits], [trials, trials])
    ks = ks_2samp(sc_frac, eager_frac).pvalue if len(set(sc_frac + eager_frac)) > 1 else 1.0
    return CrossValidation(sc_hits / trials, eager_hits / trials, float(pval), float(ks), trials)


@dataclass(frozen=True, eq=False)
class TraceComparison:
    empirical: dict[str, np.ndarray]
    recurrence: dict[str, np.ndarray]
    compared_steps: np.ndarray
    max_rel_dev_b: float
    max_rel_dev: float
    is_dynamo: bool


def trace_vs_recurrence(n: int, p: float, seed: int = 0, min_count: float = 1e3) -> TraceComparison:
    """Empirical SC fractions against the recurrence without safety factors.

    Only steps where ``b``, ``m`` and ``r`` all exceed ``min_count / n`` are compared.
    """
    res = run_sc(n, p, seed)
    emp = res.fractions()
    steps = max(res.steps, 1)
    rec = sc_recurrence(p, steps, 1.0, 1.0)
    recd = {"b": rec.b, "m": rec.m, "r": rec.r}
    k = min(emp["b"].size, rec.b.size)
    floor = min_count / n
    ok = np.ones(k, dtype=bool)
    for key in ("b", "m", "r"):
        ok &= (emp[key][:k] > floor) & (recd[key][:k] > floor)
    idx = np.flatnonzero(ok)
    dev = {}
    for key in ("b", "m", "r"):
        e, r_ = emp[key][idx], recd[key][idx]
        sel = r_ > 0
        dev[key] = float(np.max(np.abs(e[sel] - r_[sel]) / r_[sel])) if sel.any() else 0.0
    return TraceComparison(emp, recd, idx, dev["b"], max(dev.values()), res.is_dynamo)
