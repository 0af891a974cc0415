"""Bernoulli seeding, dynamo-probability estimates and threshold curves.

Trial ``i`` of a run keyed by ``master_seed`` draws its graph from substream
``(master_seed, i, "graph")`` and one uniform ``U_v`` per vertex from
``(master_seed, i, "seeds")``; vertex ``v`` is a seed at level ``p`` iff
``U_v < p``.  The same uniforms are reused for every ``p``, so within a trial
the seed sets are nested and the dynamo indicator is nondecreasing in ``p``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import binom
from statsmodels.stats.proportion import proportion_confint

from .coloring import run as run_coloring
from .graph_core import AdjacencyGraph, SeedSet, TorusGraph, make_torus
from .random_regular import pairing_to_multigraph, sample_pairing, sample_simple_regular
from .rng import substream
from .sc_simulator import run_sc

FAMILIES = ("torus", "regular", "single")
ENGINES = ("eager", "sc")
CSV_COLUMNS = ["family", "n", "p", "trials", "successes", "point", "ci_low", "ci_high"]


@dataclass(frozen=True)
class GraphSpec:
    """Graph family: ``torus`` (side n), ``regular`` (n vertices, degree d) or ``single``."""

    family: str
    n: int = 1
    d: int = 4
    engine: str = "eager"
    simple: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "sc" and self.family != "regular":
            raise ValueError("the sc engine only applies to the regular family")

    @property
    def vertex_count(self) -> int:
        if self.family == "torus":
            return self.n * self.n
        if self.family == "single":
            return 1
        return self.n

    @property
    def label(self) -> str:
        if self.family == "regular":
            return f"regular{self.d}-{self.engine}"
        return self.family

    def sample_graph(self, rng: np.random.Generator):
        if self.family == "torus":
            return _torus(self.n)
        if self.family == "single":
            return AdjacencyGraph(np.zeros(2, dtype=np.int64), np.empty(0, dtype=np.int64))
        if self.simple:
            return sample_simple_regular(self.n, self.d, rng).graph
        return pairing_to_multigraph(sample_pairing(self.n, self.d, rng))


_TORUS_CACHE: dict[int, TorusGraph] = {}


def _torus(n: int) -> TorusGraph:
    if n not in _TORUS_CACHE:
        _TORUS_CACHE[n] = make_torus(n)
    return _TORUS_CACHE[n]


def sample_seeds(g, p: float, seed) -> SeedSet:
    """Each vertex independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(g.vertex_count)
    return SeedSet(u < p, p=p, rng_seed=None if isinstance(seed, np.random.Generator) else seed)


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    is_dynamo: bool
    black_fraction: float


def run_trial(spec: GraphSpec, p: float, master_seed: int, index: int, psi: int = 2) -> TrialOutcome:
    u = substream(master_seed, index, "seeds").random(spec.vertex_count)
    seeds = u < p
    graph_rng = substream(master_seed, index, "graph")
    if spec.engine == "sc":
        res = run_sc(spec.n, p, seeds=seeds, graph_rng=graph_rng, d=spec.d)
        return TrialOutcome(index, res.is_dynamo, res.black_fraction)
    g = spec.sample_graph(graph_rng)
    out = run_coloring(g, seeds, psi, record_times=False)
    return TrialOutcome(index, out.is_dynamo, out.black_fraction)


def critical_probability(spec: GraphSpec, master_seed: int, index: int, psi: int = 2) -> float:
    """Smallest ``p`` beyond which trial ``index`` is a dynamo (exact, by bisection over ranks)."""
    if spec.engine == "sc":
        raise ValueError("critical probabilities need the eager engine (fixed graph per trial)")
    u = substream(master_seed, index, "seeds").random(spec.vertex_count)
    g = spec.sample_graph(substream(master_seed, index, "graph"))
    order = np.argsort(u, kind="stable")
    lo, hi = 0, u.size      # dynamo(hi) holds, dynamo(lo) unknown
    mask = np.zeros(u.size, dtype=bool)
    while lo < hi:
        mid = (lo + hi) // 2
        mask[:] = False
        mask[order[:mid]] = True
        if run_coloring(g, mask, psi, record_times=False).is_dynamo:
            hi = mid
        else:
            lo = mid + 1
    return float(u[order[lo - 1]]) if lo > 0 else 0.0


def _run_chunk(args):
    fn, spec, extra, master_seed, idx = args
    return [(i, fn(spec, *extra, master_seed, i)) for i in idx]


def _map_trials(fn, spec, extra, master_seed, indices: Iterable[int], workers: int) -> list:
    """Evaluate ``fn`` for every trial index; output order follows ``indices`` for any worker count."""
    indices = list(indices)
    if workers <= 1 or len(indices) < 2:
        return [fn(spec, *extra, master_seed, i) for i in indices]
    k = min(len(indices), workers * 4)
    chunks = [indices[j::k] for j in range(k)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = ex.map(_run_chunk, [(fn, spec, extra, master_seed, c) for c in chunks])
        done = dict(pair for part in parts for pair in part)
    return [done[i] for i in indices]


@dataclass(frozen=True)
class MonteCarloEstimate:
    successes: int
    trials: int
    point: float
    ci_low: float
    ci_high: float
    family: str = ""
    n: int = 0
    p: float = float("nan")
    black_fractions: tuple = field(default=(), repr=False, compare=False)

    def row(self) -> dict:
        return {"family": self.family, "n": self.n, "p": self.p, "trials": self.trials,
                "successes": self.successes, "point": self.point,
                "ci_low": self.ci_low, "ci_high": self.ci_high}


def wilson(successes: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    lo, hi = proportion_confint(successes, trials, alpha=alpha, method="wilson")
    return float(max(0.0, min(lo, successes / trials))), float(min(1.0, max(hi, successes / trials)))


def estimate_dynamo_prob(spec: GraphSpec, p: float, trials: int, master_seed: int = 0,
                         workers: int = 1) -> MonteCarloEstimate:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    outcomes = _map_trials(run_trial, spec, (p,), master_seed, range(trials), workers)
    hits = sum(o.is_dynamo for o in outcomes)
    lo, hi = wilson(hits, trials)
    return MonteCarloEstimate(hits, trials, hits / trials, lo, hi, spec.label,
                              spec.n, p, tuple(o.black_fraction for o in outcomes))


@dataclass(frozen=True)
class ThresholdCurvePoint:
    n: int
    z: float
    p_z: float
    trials_used: int
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    converged: bool = True

    def scaled(self) -> float:
        """``p_z * ln n`` for the torus scaling law."""
        return self.p_z * math.log(self.n)


def quantile_with_ci(samples: np.ndarray, z: float, alpha: float = 0.05) -> tuple[float, float, float]:
    """Level-``z`` point ``inf{p : #(samples < p) >= z T}`` and a distribution-free order-statistic interval."""
    x = np.sort(np.asarray(samples, dtype=float))
    t = x.size
    k = max(1, math.ceil(z * t - 1e-12))
    point = float(x[k - 1])
    lo_rank = int(binom.ppf(alpha / 2, t, z))
    hi_rank = int(binom.ppf(1 - alpha / 2, t, z)) + 1
    return point, float(x[max(lo_rank - 1, 0)]), float(x[min(hi_rank - 1, t - 1)])


@dataclass
class CriticalSample:
    """Per-trial critical probabilities, grown on demand."""

    spec: GraphSpec
    master_seed: int
    workers: int = 1
    values: list = field(default_factory=list)

    def extend_to(self, trials: int) -> np.ndarray:
        start = len(self.values)
        if trials > start:
            self.values += _map_trials(critical_probability, self.spec, (), self.master_seed,
                                       range(start, trials), self.workers)
        return np.asarray(self.values[:trials])


def find_threshold(spec: GraphSpec, z: float, tol: float = 0.01, budget: int = 1600,
                   master_seed: int = 0, workers: int = 1, initial_trials: int = 64,
                   sample: Optional[CriticalSample] = None) -> ThresholdCurvePoint:
    """``p_z``: the level at which the estimated dynamo probability reaches ``z``.

    Each trial's critical probability is found by bisection; trials double
    until the order-statistic interval for the ``z``-quantile is narrower than
    ``tol`` or ``budget`` trials are used (then ``converged`` is False).
    """
    if not 0.0 < z < 1.0:
        raise ValueError("z must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    sample = sample or CriticalSample(spec, master_seed, workers)
    trials = min(initial_trials, budget)
    while True:
        crit = sample.extend_to(trials)
        point, lo, hi = quantile_with_ci(crit, z)
        if hi - lo < tol or trials >= budget:
            return ThresholdCurvePoint(spec.n, z, point, trials, lo, hi, hi - lo < tol)
        trials = min(2 * trials, budget)


def threshold_levels(spec: GraphSpec, zs: Sequence[float], tol: float = 0.01, budget: int = 1600,
                     master_seed: int = 0, workers: int = 1,
                     initial_trials: int = 64) -> list[ThresholdCurvePoint]:
    """Several levels at one size from a shared sample; results are ordered in ``z``."""
    sample = CriticalSample(spec, master_seed, workers)
    points = [find_threshold(spec, z, tol, budget, master_seed, workers, initial_trials, sample)
              for z in zs]
    # every level is read off the final, largest sample so the levels stay comparable
    crit = sample.extend_to(max(p.trials_used for p in points))
    out = []
    for z, pt in zip(zs, points):
        point, lo, hi = quantile_with_ci(crit, z)
        out.append(ThresholdCurvePoint(spec.n, z, point, crit.size, lo, hi, pt.converged))
    return out


def sweep(spec: GraphSpec, n_list: Iterable[int], p_grid: Iterable[float], trials: int,
          master_seed: int = 0, workers: int = 1) -> list[MonteCarloEstimate]:
    n_list, p_grid = list(n_list), list(p_grid)
    if not n_list or not p_grid:
        raise ValueError("grids must be nonempty")
    rows = []
    for n in n_list:
        s = GraphSpec(spec.family, n, spec.d, spec.engine, spec.simple)
        for p in p_grid:
            rows.append(estimate_dynamo_prob(s, p, trials, master_seed, workers))
    return rows


def monotonicity_violations(rows: Sequence[MonteCarloEstimate]) -> list[tuple[float, float]]:
    """Pairs ``(p1, p2)``, ``p1 < p2`` at equal ``n``, where the estimate drops with disjoint intervals."""
    bad = []
    by_n: dict[int, list[MonteCarloEstimate]] = {}
    for r in rows:
        by_n.setdefault(r.n, []).append(r)
    for group in by_n.values():
        group = sorted(group, key=lambda r: r.p)
        for a, b in zip(group, group[1:]):
            if b.point < a.point and b.ci_high < a.ci_low:
                bad.append((a.p, b.p))
    return bad


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def rows_to_csv(rows: Sequence[MonteCarloEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        d = r.row()
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: Sequence[MonteCarloEstimate]) -> list[dict]:
    return [{c: (float(_fmt(v)) if isinstance(v, float) else v) for c, v in r.row().items()}
            for r in rows]
