import math

import mpmath
import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.stats import binom

from dynamos import bounds as bd
from dynamos.graph_core import Rectangle, make_torus
from dynamos.torus_analysis import is_bad_rectangle


def test_binomials_match_scipy():
    for n, k, p in [(4, 2, 0.3), (3, 1, 0.9), (10, 0, 0.1), (7, 7, 0.5)]:
        assert bd.binom_exact(n, k, p) == pytest.approx(binom.pmf(k, n, p), rel=1e-12)
        assert bd.binom_tail(n, k, p) == pytest.approx(binom.sf(k - 1, n, p), rel=1e-12)
    assert sum(bd.binom_exact(4, k, 0.37) for k in range(5)) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(bd.BoundsError):
        bd.binom_exact(3, 4, 0.1)
    with pytest.raises(bd.BoundsError):
        bd.binom_tail(3, 1, 1.5)


def test_derived_seed_prob():
    assert bd.derived_seed_prob(0.0) == 0.0
    assert bd.derived_seed_prob(1.0) == 1.0
    assert bd.derived_seed_prob(0.5) == pytest.approx(15 / 16)


def test_bad_rect_prob_against_sampling():
    t = make_torus(12)
    r = Rectangle(0, 0, 6, 3)
    p = 0.3
    rng = np.random.default_rng(0)
    hits = sum(is_bad_rectangle(t, rng.random(144) < p, r) for _ in range(4000))
    single, union = bd.bad_rect_prob(p, 6, 3, 12)
    assert abs(hits / 4000 - single) < 4 * math.sqrt(single * (1 - single) / 4000)
    assert union == pytest.approx(2 * 144 * single)


def test_line_size_and_depth():
    assert bd.line_size(math.e ** 3 + 1) == 3
    assert bd.growth_square_side(math.e ** 2 + 1) == 17
    assert bd.tree_depth(1e6) == math.floor(2 * math.log2(math.log(1e6)))


def test_beta_root():
    b = bd.beta_root()
    assert b.closed_form == pytest.approx(0.012117, abs=1e-4)
    assert b.residual < 1e-12
    assert b.bisection == pytest.approx(b.closed_form, abs=1e-12)
    mp_root = mpmath.findroot(lambda x: mpmath.log(1 - mpmath.exp(-12 * x)) + 2, 0.012)
    assert float(mp_root) == pytest.approx(b.closed_form, rel=1e-12)


@pytest.mark.parametrize("q", [0.1, 0.5, 0.9, 0.99])
def test_v_products_against_q_pochhammer(q):
    v = bd.v_products(q, tol=1e-13)
    assert v.v_all == pytest.approx(float(mpmath.qp(q, q)) ** 4, rel=1e-9)
    assert v.v_odd == pytest.approx(float(mpmath.qp(q, q * q)) ** 4, rel=1e-9)
    assert v.v_even == pytest.approx(float(mpmath.qp(q * q, q * q)) ** 4, rel=1e-9)
    assert v.v_all == pytest.approx(v.v_odd * v.v_even, rel=1e-12)
    # ordering of the partial products and the analytic lower bound
    assert v.v_all <= v.v_even <= 1 and v.v_all <= v.v_odd <= v.v_even
    assert v.tail_bound < 1e-13
    assert bd.v_all_lower_bound(1 - q) <= v.v_all * (1 + 1e-9)


def test_v_products_edge():
    assert bd.v_products(0.0).v_all == 1.0
    with pytest.raises(bd.BoundsError):
        bd.v_products(1.0)


def test_pi2_over_6():
    assert bd.PI2_OVER_6 == pytest.approx(float(mpmath.zeta(2)), abs=1e-15)
    assert bd.PI2_OVER_6 == pytest.approx(1.644934, abs=1e-6)


def test_zaire_log_form_matches_direct():
    for n in (1e6, 1e12, 1e100):
        L = math.log(n)
        assert bd.zaire_at_log(L, 1.65) == pytest.approx(
            bd.zaire_divergence(n, 1.65 / L, bd.growth_square_side(n)), rel=1e-12)


def test_zaire_monotonicity():
    logs = [2e3, 1e4, 1e5, 1e6, 1e7]
    up = [bd.zaire_at_log(L, 1.65) for L in logs]
    down = [bd.zaire_at_log(L, 1.60) for L in logs]
    assert all(b > a for a, b in zip(up, up[1:]))
    assert all(b < a for a, b in zip(down, down[1:]))
    assert up[-1] > 1e3 and down[-1] < -1e3


def test_zaire_turning_point():
    L0 = bd.zaire_turning_point(1.65)
    assert 1000 < L0 < 1600
    assert bd.zaire_turning_point(1.60) is None
    assert bd.zaire_turning_point(bd.PI2_OVER_6) is None
    # below the turning point the log-cubic side length still dominates
    assert bd.zaire_at_log(math.log(1e12), 1.65) < bd.zaire_at_log(math.log(1e6), 1.65)


def tree_fixed_point(p):
    # smallest root of p + (1-p)(3y^2 - 2y^3) - y in [p, 1]
    coeffs = [-2 * (1 - p), 3 * (1 - p), -1, p]
    roots = np.roots(coeffs)
    real = sorted(r.real for r in roots if abs(r.imag) < 1e-12 and p - 1e-12 <= r.real <= 1)
    return real[0]


def test_tree_recursion():
    up = bd.tree_recursion(0.12, 100)
    assert up.escape_step is not None and up.escape_step <= 100
    assert up.classification == "escapes"
    slack = bd.tree_recursion(0.12, 100, bd.ROUNDING_SLACK)
    assert slack.escape_step is not None and slack.escape_step <= 100
    low = bd.tree_recursion(0.10, 1000)
    fp = tree_fixed_point(0.10)
    assert fp == pytest.approx(1 / 6, abs=1e-12)
    assert low.sup < 0.20 and low.sup <= fp + 1e-12
    assert low.classification == "stalls"
    g = lambda y: 0.10 + 0.9 * (3 * y * y - 2 * y ** 3) - y
    assert brentq(g, 0.1, 0.3) == pytest.approx(fp, abs=1e-10)
    assert bd.tree_recursion(1.0, 0).escape_step == 0


def test_tree_recursion_monotone_in_p():
    a = bd.tree_recursion(0.11, 60).values
    b = bd.tree_recursion(0.115, 60).values
    assert all(y <= z for y, z in zip(a, b))


def test_contraction_check():
    grid = [1e-3, 0.1, 0.3, 3 / 7 - 1e-9, 3 / 7, 0.5, 0.9, 0.999]
    rep = bd.epsilon_contraction_check(grid)
    for row in rep.rows:
        direct = 1 - binom.sf(1, 3, 1 - row.eps)
        assert row.exact == pytest.approx(direct, rel=1e-9, abs=1e-15)
    assert rep.cubic_failures == [e for e in grid if e < 3 / 7]
    assert rep.quadratic_all_hold
    with pytest.raises(bd.BoundsError):
        bd.epsilon_contraction_check([0.0])


def test_sc_recurrence_milestones_and_conservation():
    tr = bd.sc_recurrence(0.10, 60)
    assert tr.m[60] < 0.36 and tr.b[60] < 1e-8 and tr.r[60] > 0.41
    assert tr.cumulative_black[60] < 0.24
    # the safety factors open a gap of exactly t2 - t2_lo
    assert np.allclose(tr.conservation_gaps(), (tr.t2 - tr.t2_lo)[1:], atol=1e-15)
    exact = bd.sc_recurrence(0.10, 60, 1.0, 1.0)
    assert np.all(exact.conservation_gaps() < 1e-12)
    total = exact.cumulative_black + exact.m + exact.r
    assert np.allclose(total, 1.0, atol=1e-12)


def test_sc_recurrence_dense_case_runs():
    tr = bd.sc_recurrence(0.12, 60, 1.0, 1.0)
    assert tr.cumulative_black[-1] > 0.99
    with pytest.raises(bd.BoundsError):
        bd.sc_recurrence(0.1, 0)
    with pytest.raises(bd.BoundsError):
        bd.sc_recurrence(0.1, 10, 0.9, 1.0)


def test_gw_moments():
    bp = bd.BranchingParams(1000, 0.9, 0.9)
    m = bd.gw_moments(bp, 5)
    assert m.E_Xt == pytest.approx(1000 * 0.9 ** 5)
    assert m.E_Xsum == pytest.approx(10_000)
    assert m.var_bound == pytest.approx(1000 * 0.9 / 0.01)
    assert m.var_exact == pytest.approx(1000 * 0.9 / 0.001)
    assert m.tail_prob_bound == pytest.approx(m.var_bound / 1e8)
    sup = bd.gw_moments(bd.BranchingParams(10, 1.5, 1), 3)
    assert sup.E_Xsum is None and sup.E_Xt == pytest.approx(10 * 1.5 ** 3)
    with pytest.raises(bd.BoundsError):
        bd.gw_moments(bd.BranchingParams(10, 1.0, 1), 3, require_sum=True)


def test_gw_exact_variance_matches_simulation():
    bp = bd.BranchingParams(50, 0.5, 0.5)
    s = bd.gw_simulate(bp, bd.Offspring.parse("poisson", 0.5), 40_000, seed=4)
    m = bd.gw_moments(bp, 0)
    assert s.x_sum.var() == pytest.approx(m.var_exact, rel=0.05)
    assert s.mean == pytest.approx(m.E_Xsum, rel=0.01)


def test_offspring_laws():
    assert bd.Offspring.parse("binomial:3", 0.9).variance == pytest.approx(3 * 0.3 * 0.7)
    assert bd.Offspring.parse("constant", 1.0).variance == 0.0
    with pytest.raises(bd.BoundsError):
        bd.Offspring.parse("geometric", 0.5)
    const = bd.gw_simulate(bd.BranchingParams(5, 0.0, 0.0), bd.Offspring.parse("constant", 0.0), 3)
    assert const.x_sum.tolist() == [5, 5, 5]


def test_recurrence_gap_bounded_by_gamma_spread():
    tr = bd.sc_recurrence(0.10, 60)
    assert np.all(tr.conservation_gaps() <= (tr.gamma_hi - tr.gamma_lo) * tr.m[1:-1] + 1e-15)


def test_recurrence_without_factors_collapses():
    assert bd.sc_recurrence(0.10, 60, 1.0, 1.0).b[60] < 1e-7
