import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynamos.coloring import is_dynamo, run
from dynamos.graph_core import GraphError, Rectangle, SeedSet, coarsen, make_torus
from dynamos.torus_analysis import (
    CageCover, audit_cage_cover, build_cage_cover, certify_non_dynamo, every_line_has_seed,
    find_seed_free_line, gamma1_holds, incrementing_lines, is_bad_rectangle, make_layout,
    verify_cage_cover,
)


def seeds_at(t, cells):
    return SeedSet.from_indices(t.vertex_count, [t.index(x, y) for x, y in cells])


def test_bad_and_good_rectangles():
    t = make_torus(10)
    r = Rectangle(0, 0, 5, 2)   # longer side along x, two x-lines
    assert not is_bad_rectangle(t, SeedSet.empty(100), r)
    assert find_seed_free_line(t, SeedSet.empty(100), r) == Rectangle(0, 0, 5, 1)
    blocked = seeds_at(t, [(0, 0), (4, 1)])
    assert is_bad_rectangle(t, blocked, r)
    assert find_seed_free_line(t, blocked, r) is None
    one = seeds_at(t, [(2, 0)])
    assert find_seed_free_line(t, one, r) == Rectangle(0, 1, 5, 1)
    tall = Rectangle(8, 8, 2, 4)  # wraps; lines along y
    assert find_seed_free_line(t, seeds_at(t, [(8, 9)]), tall) == Rectangle(9, 8, 1, 4)


def test_empty_seed_set_certified():
    t = make_torus(32)
    cover = certify_non_dynamo(t, SeedSet.empty(t.vertex_count))
    assert cover is not None and cover.cages
    derived, s2 = coarsen(t, SeedSet.empty(t.vertex_count))
    assert verify_cage_cover(cover, s2)


def test_dense_seed_set_not_certified():
    t = make_torus(32)
    s = np.random.default_rng(0).random(t.vertex_count) < 0.9
    assert certify_non_dynamo(t, s) is None


def test_odd_side_gives_no_certificate():
    assert certify_non_dynamo(make_torus(31), SeedSet.empty(31 * 31)) is None


def test_too_small_side_gives_no_certificate():
    assert certify_non_dynamo(make_torus(8), SeedSet.empty(64), stripe_width=4) is None
    with pytest.raises(GraphError):
        make_layout(8, 3)


def test_cover_json_roundtrip():
    t = make_torus(40)
    s = np.random.default_rng(1).random(t.vertex_count) < 0.005
    cover = certify_non_dynamo(t, s)
    assert cover is not None
    back = CageCover.from_json(cover.to_json())
    assert back.cages == cover.cages and back.derived_side == cover.derived_side


@settings(max_examples=150, deadline=None)
@given(half=st.integers(8, 32), p=st.sampled_from([0.0, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1]),
       seed=st.integers(0, 2**31))
def test_certificates_are_sound(half, p, seed):
    t = make_torus(2 * half)
    s = np.random.default_rng(seed).random(t.vertex_count) < p
    cover = certify_non_dynamo(t, s)
    if cover is not None:
        assert not is_dynamo(t, s)
        # interiors of the cages already contain the closure on G'
        derived, s2 = coarsen(t, s)
        assert audit_cage_cover(cover, s2).ok


def test_audit_flags_broken_covers():
    t = make_torus(40)
    derived, s2 = coarsen(t, SeedSet.empty(t.vertex_count))
    good = build_cage_cover(derived, s2, 3)
    assert verify_cage_cover(good, s2)

    ring_seed = SeedSet.from_indices(derived.vertex_count,
                                     [derived.index(good.cages[0].x, good.cages[0].y)])
    assert audit_cage_cover(good, ring_seed).ring_seeds >= 1
    assert not verify_cage_cover(good, ring_seed)

    whole = CageCover([Rectangle(0, 0, derived.side, derived.side)], derived.side)
    a = audit_cage_cover(whole, s2)
    assert a.ok is False

    overlap = CageCover([Rectangle(0, 0, 6, 6), Rectangle(2, 2, 6, 6)], derived.side)
    a = audit_cage_cover(overlap, s2)
    assert a.interior_overlaps > 0 and a.interior_meets_other_cage > 0

    # seed outside every interior
    s_out = SeedSet.from_indices(derived.vertex_count, [derived.index(15, 15)])
    assert audit_cage_cover(CageCover([Rectangle(0, 0, 5, 5)], derived.side), s_out).uncovered_seeds == 1

    touching = CageCover([Rectangle(0, 0, 5, 5), Rectangle(3, 0, 5, 5)], derived.side)
    assert audit_cage_cover(touching, s2).interior_meets_other_cage > 0

    bad = CageCover([Rectangle(0, 0, 0, 3)], derived.side)
    assert audit_cage_cover(bad, s2).bad_shapes == 1


def test_interior_closure_under_rule():
    t = make_torus(48)
    s = np.random.default_rng(7).random(t.vertex_count) < 0.003
    cover = certify_non_dynamo(t, s)
    assert cover is not None
    derived, s2 = coarsen(t, s)
    final = run(derived, s2).final_black
    from dynamos.graph_core import circumference_mask, rectangle_grid
    inside = np.zeros(derived.vertex_count, dtype=bool)
    for c in cover.cages:
        g = rectangle_grid(derived, c)
        inside[g[~circumference_mask(derived, c)]] = True
    assert not np.any(final & ~inside)


def test_incrementing_lines_geometry():
    t = make_torus(11)
    c = t.index(5, 5)
    lines = incrementing_lines(t, c, 3)
    assert lines[0] == Rectangle(4, 3, 3, 1)
    assert lines[1] == Rectangle(4, 7, 3, 1)
    assert lines[2] == Rectangle(3, 4, 1, 3)
    assert lines[3] == Rectangle(7, 4, 1, 3)


def growth_by_simulation(t, s, center, side):
    # seeds inside the target square only; start from the centre black
    n = t.side
    cx, cy = t.coords(center)
    h = (side - 1) // 2
    inside = np.zeros(t.vertex_count, dtype=bool)
    for x in range(cx - h, cx + h + 1):
        for y in range(cy - h, cy + h + 1):
            inside[t.index(x, y)] = True
    mask = np.asarray(s.mask if hasattr(s, "mask") else s) & inside
    mask = mask.copy()
    mask[center] = True
    black = run(t, mask).final_black
    return bool(black[inside].all())


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(0.2, 0.9), side=st.sampled_from([3, 5, 7]))
def test_gamma1_implies_square_filled(seed, p, side):
    t = make_torus(15)
    s = np.random.default_rng(seed).random(t.vertex_count) < p
    center = t.index(7, 7)
    if gamma1_holds(t, s, center, side):
        assert growth_by_simulation(t, s, center, side)


def test_gamma1_trivial_cases():
    t = make_torus(9)
    assert gamma1_holds(t, SeedSet.empty(81), 40, 1)
    assert gamma1_holds(t, SeedSet.full(81), 40, 9)
    assert not gamma1_holds(t, SeedSet.empty(81), 40, 3)
    with pytest.raises(GraphError):
        gamma1_holds(t, SeedSet.empty(81), 40, 4)


def test_every_line_has_seed():
    t = make_torus(6)
    diag = seeds_at(t, [(i, i) for i in range(6)])
    assert every_line_has_seed(t, diag, 6)
    assert not every_line_has_seed(t, diag, 1)
    assert not every_line_has_seed(t, SeedSet.empty(36), 6)
    assert every_line_has_seed(t, SeedSet.full(36), 1)
    with pytest.raises(GraphError):
        every_line_has_seed(t, diag, 7)
