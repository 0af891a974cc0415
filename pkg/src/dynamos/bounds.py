"""Closed forms, products, roots and recurrences behind the threshold results.

All evaluations are double precision.  Infinite products are truncated with an
explicit tail bound, and recurrences are transcribed step for step on
fractions of the vertex count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect

PI2_OVER_6 = math.pi ** 2 / 6
ESCAPE_LEVEL = 0.999
ROUNDING_SLACK = 1 - 1e-6


class BoundsError(ValueError):
    pass


def _check_prob(p: float, name: str = "p") -> None:
    if not 0.0 <= p <= 1.0:
        raise BoundsError(f"{name}={p} outside [0, 1]")


def binom_exact(n: int, k: int, p: float) -> float:
    """``C(n, k) p^k (1-p)^(n-k)``."""
    if not 0 <= k <= n:
        raise BoundsError(f"need 0 <= k <= n, got n={n}, k={k}")
    _check_prob(p)
    return math.comb(n, k) * p ** k * (1 - p) ** (n - k)


def binom_tail(n: int, k: int, p: float) -> float:
    """``P(Bin(n, p) >= k)``."""
    if not 0 <= k <= n:
        raise BoundsError(f"need 0 <= k <= n, got n={n}, k={k}")
    _check_prob(p)
    return sum(math.comb(n, i) * p ** i * (1 - p) ** (n - i) for i in range(k, n + 1))


def derived_seed_prob(p: float) -> float:
    """Seed probability of a coarsened 2x2 block."""
    _check_prob(p)
    return 1 - (1 - p) ** 4


def bad_rect_prob(p_prime: float, w: int, h: int, n: int) -> tuple[float, float]:
    """Probability that one ``w x h`` rectangle (w >= h) is bad, and the ``2 n^2`` union bound."""
    _check_prob(p_prime, "p_prime")
    if w < 1 or h < 1 or n < 1:
        raise BoundsError("dimensions must be positive")
    single = (1 - (1 - p_prime) ** w) ** h
    return single, 2 * n * n * single


def line_size(n: float) -> int:
    """``floor(ln n)``."""
    return int(math.floor(math.log(n)))


@dataclass(frozen=True)
class BetaRoot:
    closed_form: float
    bisection: float
    residual: float


def _beta_equation(beta: float) -> float:
    return math.log(1 - math.exp(-12 * beta)) + 2


def beta_root() -> BetaRoot:
    """Root of ``ln(1 - exp(-12 beta)) = -2``."""
    closed = -math.log(1 - math.exp(-2)) / 12
    numeric = bisect(_beta_equation, 1e-6, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return BetaRoot(closed, numeric, abs(_beta_equation(closed)))


@dataclass(frozen=True)
class VProducts:
    v_odd: float
    v_even: float
    v_all: float
    log_v_odd: float
    log_v_even: float
    terms: int
    tail_bound: float


def v_products(q: float, tol: float = 1e-12) -> VProducts:
    """Products of ``(1 - q^i)^4`` over odd, even and all ``i >= 1``.

    Truncated after ``I`` factors once ``4 q^(I+1) / (1-q)^2`` (a bound on the
    omitted part of the log-product) drops below ``tol``.
    """
    if not 0.0 <= q < 1.0:
        raise BoundsError("need 0 <= q < 1")
    if tol <= 0:
        raise BoundsError("tol must be positive")
    if q == 0.0:
        return VProducts(1.0, 1.0, 1.0, 0.0, 0.0, 0, 0.0)
    terms = max(1, math.ceil(math.log(tol * (1 - q) ** 2 / 4) / math.log(q)))
    i = np.arange(1, terms + 1)
    logs = 4 * np.log1p(-(q ** i))
    log_odd = float(logs[0::2].sum())
    log_even = float(logs[1::2].sum())
    tail = 4 * q ** (terms + 1) / (1 - q) ** 2
    return VProducts(math.exp(log_odd), math.exp(log_even), math.exp(log_odd + log_even),
                     log_odd, log_even, terms, tail)


def v_all_lower_bound(p: float) -> float:
    """``exp(-4 (pi^2/6) q/p)``, a lower bound on the full product."""
    if not 0.0 < p <= 1.0:
        raise BoundsError("need 0 < p <= 1")
    return math.exp(-4 * PI2_OVER_6 * (1 - p) / p)


def zaire_divergence(n: float, p: float, square_side_h: float) -> float:
    """``ln n - q pi^2 / (6p) - ln(1/p) - ln h``; divergence to +inf drives local growth."""
    if not 0.0 < p <= 1.0:
        raise BoundsError("need 0 < p <= 1")
    return math.log(n) - (1 - p) * PI2_OVER_6 / p - math.log(1 / p) - math.log(square_side_h)


def zaire_at_log(log_n: float, c: float) -> float:
    """The same expression at ``p = c / ln n`` and ``h = 2 floor(ln n)^3 + 1``, given ``ln n``.

    Working with ``ln n`` lets the asymptotic regime (``ln n`` in the thousands) be evaluated.
    """
    if log_n <= c or c <= 0:
        raise BoundsError("need 0 < c < ln n")
    p = c / log_n
    h = 2 * math.floor(log_n) ** 3 + 1
    return log_n - (1 - p) * PI2_OVER_6 / p - math.log(1 / p) - math.log(h)


def zaire_turning_point(c: float) -> Optional[float]:
    """``ln n`` beyond which :func:`zaire_at_log` increases (floor dropped); ``None`` if it never does."""
    slope = 1 - PI2_OVER_6 / c
    if slope <= 0:
        return None
    deriv = lambda L: slope - 1 / L - 6 * L * L / (2 * L ** 3 + 1)
    hi = 10.0
    while deriv(hi) <= 0:
        hi *= 2
    return bisect(deriv, 1.0 + 1e-9, hi, xtol=1e-9)


def growth_square_side(n: float) -> int:
    """Side ``2 floor(ln n)^3 + 1`` of the local growth squares."""
    return 2 * line_size(n) ** 3 + 1


def tree_depth(n: float) -> int:
    """``floor(2 lg log n)``, depth of the local tree around a vertex."""
    return int(math.floor(2 * math.log2(math.log(n))))


@dataclass(frozen=True)
class TreeRecursion:
    p: float
    values: list[float]
    escape_step: Optional[int]

    @property
    def classification(self) -> str:
        return "escapes" if self.escape_step is not None else "stalls"

    @property
    def sup(self) -> float:
        return max(self.values)


def tree_recursion(p: float, steps: int, slack: float = 1.0,
                   level: float = ESCAPE_LEVEL) -> TreeRecursion:
    """``Y_0 = p``, ``Y_{k+1} = slack * (p + (1-p) P(Bin(3, Y_k) >= 2))`` from the leaves up."""
    _check_prob(p)
    if steps < 0:
        raise BoundsError("steps must be >= 0")
    y = p
    values = [y]
    escape = 0 if y >= level else None
    for k in range(1, steps + 1):
        y = slack * (p + (1 - p) * (3 * y * y - 2 * y ** 3))
        values.append(y)
        if escape is None and y >= level:
            escape = k
    return TreeRecursion(p, values, escape)


@dataclass(frozen=True)
class ContractionRow:
    eps: float
    exact: float
    cubic_bound: float
    quadratic_bound: float

    @property
    def cubic_holds(self) -> bool:
        return self.exact <= self.cubic_bound

    @property
    def quadratic_holds(self) -> bool:
        return self.exact <= self.quadratic_bound


@dataclass(frozen=True)
class ContractionReport:
    rows: list[ContractionRow]
    # exact = 5 eps^3 at eps = 3/7; the cubic bound fails below it
    cubic_failure_below: float = 3 / 7

    @property
    def cubic_failures(self) -> list[float]:
        return [r.eps for r in self.rows if not r.cubic_holds]

    @property
    def quadratic_all_hold(self) -> bool:
        return all(r.quadratic_holds for r in self.rows)


def epsilon_contraction_check(eps_grid: Sequence[float]) -> ContractionReport:
    """Compare ``1 - P(Bin(3, 1-eps) >= 2) = eps^2 (3 - 2 eps)`` with ``5 eps^3`` and ``3 eps^2``."""
    rows = []
    for e in eps_grid:
        if not 0.0 < e < 1.0:
            raise BoundsError("eps must lie in (0, 1)")
        rows.append(ContractionRow(e, e * e * (3 - 2 * e), 5 * e ** 3, 3 * e * e))
    return ContractionReport(rows)


@dataclass(frozen=True, eq=False)
class RecurrenceTrace:
    """Per-step fractions of n; ``z[i]`` and the ``t*`` arrays belong to step ``i -> i+1``."""

    p: float
    gamma_hi: float
    gamma_lo: float
    b: np.ndarray
    m: np.ndarray
    r: np.ndarray
    z: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t2_lo: np.ndarray
    t3: np.ndarray

    @property
    def cumulative_black(self) -> np.ndarray:
        return np.cumsum(self.b)

    @property
    def steps(self) -> int:
        return self.b.size - 1

    def conservation_gaps(self) -> np.ndarray:
        """``|b_{i+1} + (m_{i+1} - m_i) - (t1_i + t3_i)|`` for ``i >= 1``."""
        lhs = self.b[2:] + np.diff(self.m)[1:]
        return np.abs(lhs - (self.t1[1:] + self.t3[1:]))


def _f4_ge2(z: float) -> float:
    return 1 - (1 - z) ** 4 - 4 * z * (1 - z) ** 3


def _f4_eq1(z: float) -> float:
    return 4 * z * (1 - z) ** 3


def _f3_ge1(z: float) -> float:
    return 1 - (1 - z) ** 3


def sc_recurrence(p: float, steps: int, gamma_hi: float = 1.0001,
                  gamma_lo: float = 0.9999, tol: float = 1e-9) -> RecurrenceTrace:
    """Deterministic recurrence for the sets of the sampling-coloring process."""
    _check_prob(p)
    if steps < 1:
        raise BoundsError("steps must be >= 1")
    if not (gamma_hi >= 1.0 >= gamma_lo > 0.0):
        raise BoundsError("need gamma_hi >= 1 >= gamma_lo > 0")
    b = np.zeros(steps + 1)
    m = np.zeros(steps + 1)
    r = np.zeros(steps + 1)
    z = np.zeros(steps)
    t1, t2, t2_lo, t3 = (np.zeros(steps) for _ in range(4))

    b[0] = p * gamma_hi
    r[0] = 1 - b[0]
    z[0] = b[0]
    t1[0] = r[0] * _f4_ge2(z[0]) * gamma_hi
    t3[0] = r[0] * _f4_eq1(z[0]) * gamma_hi
    b[1], m[1] = t1[0], t3[0]
    r[1] = r[0] - b[1] - m[1]
    for i in range(1, steps):
        denom = 4 * r[i] + 3 * m[i] + 2 * b[i]
        zi = 2 * b[i] / denom if denom > 0 else 0.0
        z[i] = zi
        t1[i] = r[i] * _f4_ge2(zi) * gamma_hi
        t2[i] = m[i] * _f3_ge1(zi) * gamma_hi
        t2_lo[i] = m[i] * _f3_ge1(zi) * gamma_lo
        t3[i] = r[i] * _f4_eq1(zi) * gamma_hi
        b[i + 1] = t1[i] + t2[i]
        m[i + 1] = m[i] + t3[i] - t2_lo[i]
        r[i + 1] = r[i] - b[i + 1] - (m[i + 1] - m[i])
    for name, arr in (("b", b), ("m", m), ("r", r), ("z", z)):
        if arr.min() < -tol or arr.max() > 1 + tol:
            raise BoundsError(f"fraction {name} left [0, 1]; parameters out of range")
    clip = lambda a: np.clip(a, 0.0, 1.0)
    return RecurrenceTrace(p, gamma_hi, gamma_lo, clip(b), clip(m), clip(r), clip(z),
                           t1, t2, t2_lo, t3)


@dataclass(frozen=True)
class BranchingParams:
    N: float
    lam: float
    sigma2: float

    def __post_init__(self):
        if self.N < 0 or self.lam < 0 or self.sigma2 < 0:
            raise BoundsError("N, lambda and sigma^2 must be non-negative")


@dataclass(frozen=True)
class GWMoments:
    E_Xt: float
    E_Xsum: Optional[float]
    var_bound: Optional[float]
    tail_prob_bound: Optional[float]
    var_exact: Optional[float]
    tail_prob_bound_exact: Optional[float]


def gw_moments(bp: BranchingParams, t: int, require_sum: bool = False) -> GWMoments:
    """Generation mean plus total-progeny mean, variance and Chebyshev tail for ``P(X_sum > 2 E)``.

    ``var_bound = N sigma^2 / (1-lam)^2`` is the textbook-style estimate used for
    the branching argument; the exact total-progeny variance is
    ``N sigma^2 / (1-lam)^3`` and is reported alongside.
    """
    e_t = bp.N * bp.lam ** t
    if bp.lam >= 1:
        if require_sum:
            raise BoundsError("total progeny is infinite in expectation for lambda >= 1")
        return GWMoments(e_t, None, None, None, None, None)
    e_sum = bp.N / (1 - bp.lam)
    var_b = bp.N * bp.sigma2 / (1 - bp.lam) ** 2
    var_x = bp.N * bp.sigma2 / (1 - bp.lam) ** 3
    if e_sum > 0:
        tail, tail_x = var_b / e_sum ** 2, var_x / e_sum ** 2
    else:
        tail = tail_x = 0.0
    return GWMoments(e_t, e_sum, var_b, tail, var_x, tail_x)


@dataclass(frozen=True)
class Offspring:
    """Offspring law: ``poisson`` (mean lam), ``binomial`` (k trials, mean lam) or ``constant``."""

    kind: str
    lam: float
    k: int = 0

    @classmethod
    def parse(cls, spec: str, lam: float) -> "Offspring":
        name, _, arg = spec.partition(":")
        if name == "binomial":
            return cls("binomial", lam, int(arg or 3))
        if name in ("poisson", "constant"):
            return cls(name, lam)
        raise BoundsError(f"unknown offspring law {spec!r}")

    @property
    def variance(self) -> float:
        if self.kind == "poisson":
            return self.lam
        if self.kind == "binomial":
            q = self.lam / self.k
            return self.k * q * (1 - q)
        return 0.0

    def total_children(self, rng: np.random.Generator, parents: np.ndarray) -> np.ndarray:
        """Children of ``parents[j]`` iid particles, drawn in one shot per run."""
        if self.kind == "poisson":
            return rng.poisson(self.lam * parents)
        if self.kind == "binomial":
            return rng.binomial(self.k * parents, self.lam / self.k)
        return (parents * self.lam).astype(np.int64)


@dataclass(frozen=True, eq=False)
class GWSample:
    x_sum: np.ndarray
    generation_means: np.ndarray
    threshold: float
    truncated: int

    @property
    def mean(self) -> float:
        return float(self.x_sum.mean())

    @property
    def tail_frequency(self) -> float:
        return float(np.mean(self.x_sum > self.threshold))


def gw_simulate(bp: BranchingParams, offspring: Offspring, runs: int, seed: int = 0,
                max_generations: int = 100_000) -> GWSample:
    """Simulate ``runs`` independent processes started from ``N`` particles."""
    if abs(offspring.lam - bp.lam) > 1e-12:
        raise BoundsError("offspring mean must equal lambda")
    if offspring.kind == "binomial" and not 0 <= bp.lam <= offspring.k:
        raise BoundsError("binomial mean must lie in [0, k]")
    rng = np.random.default_rng(seed)
    alive = np.full(runs, int(bp.N), dtype=np.int64)
    total = alive.copy()
    gen_means = [float(alive.mean())]
    g = 0
    while alive.any() and g < max_generations:
        alive = offspring.total_children(rng, alive)
        total += alive
        gen_means.append(float(alive.mean()))
        g += 1
    threshold = 2 * bp.N / (1 - bp.lam) if bp.lam < 1 else math.inf
    return GWSample(total, np.array(gen_means), threshold, int(np.count_nonzero(alive)))
