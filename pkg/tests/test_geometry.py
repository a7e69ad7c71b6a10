import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirichlet_l1.errors import ParseError, UnresolvedFeatureError, ValidationError
from dirichlet_l1.geometry import (CubeLattice, DomainSpec, Interval, Rect, _largest_block,
                                   largest_block_bruteforce, largest_inscribed_cube,
                                   parse_domain, preset, rasterize, resolve_domain)


def test_parse_two_intervals():
    dom = parse_domain("dim=1; interval 0 1; interval 2 4")
    assert dom.dimension == 1
    assert [p.b - p.a for p in dom.pieces] == [1.0, 2.0]


def test_parse_preserves_order_and_exponents():
    dom = parse_domain("dim=2\nrect 0 0 1e0 1\ndisc 3 0 .5\nrect -1 -1 -0.5 -0.5")
    assert [p.kind for p in dom.pieces] == ["rect", "disc", "rect"]
    assert dom.pieces[1].r == 0.5


def test_empty_interval_is_validation_error():
    with pytest.raises(ValidationError, match="empty interval"):
        parse_domain("dim=1; interval 1 1")


def test_zero_radius_disc_rejected():
    with pytest.raises(ValidationError, match="empty disc"):
        parse_domain("dim=2\ndisc 0 0 0")


@pytest.mark.parametrize("text, line", [
    ("dim=1\ninterval 0 x", 2),
    ("dim=3\ninterval 0 1", 1),
    ("dim=1\n\nwedge 0 1", 3),
    ("dim=2\nrect 0 0 1", 2),
])
def test_parse_errors_carry_location(text, line):
    with pytest.raises(ParseError) as info:
        parse_domain(text)
    assert info.value.details["line"] == line
    assert info.value.details["column"] >= 1


def test_column_points_at_statement():
    with pytest.raises(ParseError) as info:
        parse_domain("dim=1; interval 0 1; bogus 3")
    assert info.value.details["column"] == 22


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        parse_domain("dim=1\nrect 0 0 1 1")


def test_dumbbell_preset_geometry():
    dom = preset("dumbbell(m=2, eps=0.2)")
    discs = [p for p in dom.pieces if p.kind == "disc"]
    rects = [p for p in dom.pieces if p.kind == "rect"]
    assert len(discs) == 2 and all(p.r == 1.0 for p in discs)
    assert math.dist((discs[0].cx, discs[0].cy), (discs[1].cx, discs[1].cy)) == pytest.approx(3.0)
    assert len(rects) == 1
    assert rects[0].y1 - rects[0].y0 == pytest.approx(0.2)


def test_dumbbell_m3_uses_strips_on_triangle():
    dom = preset("dumbbell(3, 0.2)")
    discs = [p for p in dom.pieces if p.kind == "disc"]
    centers = [(p.cx, p.cy) for p in discs]
    for i in range(3):
        assert math.dist(centers[i], centers[(i + 1) % 3]) == pytest.approx(3.0)
    assert sum(p.kind == "strip" for p in dom.pieces) == 3


def test_presets_in_domain_text():
    dom = parse_domain("dim=2\npreset disjoint_balls(2)")
    assert dom.label == "disjoint_balls(m=2)"
    dom = resolve_domain("interval_union(1,2)")
    assert [p.b - p.a for p in dom.pieces] == [1.0, 2.0]
    assert "truncated" in preset("packed_cubes(3)").notes[0]


def test_unknown_preset():
    with pytest.raises(ParseError, match="unknown preset"):
        parse_domain("dim=2\npreset blob(1)")


def test_rasterize_unit_square():
    mask = rasterize(preset("unit_square"), 0.25)
    assert mask.size == 9
    np.testing.assert_allclose(np.unique(mask.coords()[:, 0]), [0.25, 0.5, 0.75])


def test_rasterize_unit_interval_single_node():
    mask = rasterize(preset("unit_interval"), 0.5)
    assert mask.size == 1
    assert mask.coords()[0, 0] == 0.5


def test_thin_passage_unresolved():
    with pytest.raises(UnresolvedFeatureError) as info:
        rasterize(preset("dumbbell(2, eps=0.01)"), 0.05)
    assert "rect" in info.value.details["piece"]
    assert info.value.details["minimal_h"] <= 0.01


def test_rasterize_deterministic():
    dom = preset("dumbbell(2, 0.2)")
    a, b = rasterize(dom, 1 / 16), rasterize(dom, 1 / 16)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_boundary_nodes_excluded():
    # nodes on x = 0.5 sit on the shared edge of two open squares
    dom = parse_domain("dim=2\nrect 0 0 0.5 0.5\nrect 0.5 0 1 0.5")
    mask = rasterize(dom, 0.125)
    assert not np.any(np.isclose(mask.coords()[:, 0], 0.5))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.6), st.floats(0.0, 0.6), st.floats(0.1, 0.4), st.floats(0.1, 0.4))
def test_rasterization_monotone(x0, y0, w, hgt):
    big = DomainSpec(2, (Rect(0, 0, 1, 1),))
    small = DomainSpec(2, (Rect(x0, y0, x0 + w, y0 + hgt),))
    h = 1 / 32
    try:
        inner = rasterize(small, h)
    except UnresolvedFeatureError:
        return
    outer = rasterize(big, h)
    a = {tuple(r) for r in inner.global_indices()}
    b = {tuple(r) for r in outer.global_indices()}
    assert a <= b


def test_refinement_keeps_nodes():
    dom = preset("unit_disc")
    coarse = rasterize(dom, 1 / 8)
    fine = rasterize(dom, 1 / 16)
    fine_set = {tuple(r) for r in fine.global_indices()}
    assert all(tuple(2 * r) in fine_set for r in coarse.global_indices())


def test_inscribed_cube_square_and_union():
    sq = preset("unit_square")
    assert largest_inscribed_cube(sq, rasterize(sq, 0.25)) == pytest.approx(1.0)
    two = parse_domain("dim=2\nrect 0 0 1 1\nrect 3 0 4 1")
    assert largest_inscribed_cube(two, rasterize(two, 0.125)) == pytest.approx(1.0)


def test_inscribed_cube_disc_converges_to_two():
    disc = preset("unit_disc")
    vals = [largest_inscribed_cube(disc, rasterize(disc, h)) for h in (1 / 16, 1 / 32, 1 / 128)]
    assert all(v <= 2.0 + 1e-12 for v in vals)
    assert vals[-1] == pytest.approx(2.0, abs=0.01)


def test_inscribed_cube_monotone_for_rectilinear():
    dom = parse_domain("dim=2\nrect 0 0 1.3 0.9\nrect 1 0 2 0.5")
    vals = [largest_inscribed_cube(dom, rasterize(dom, 2.0 ** -k)) for k in range(2, 7)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 0.9 ** 2 + 1e-12


def test_inscribed_interval():
    dom = parse_domain("dim=1; interval 0 1; interval 2 4.5")
    assert largest_inscribed_cube(dom, rasterize(dom, 0.25)) == pytest.approx(2.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 31 - 1))
def test_dp_matches_exhaustive_search(rows, cols, seed):
    occ = np.random.default_rng(seed).random((rows, cols)) < 0.7
    assert _largest_block(occ).max(initial=0) == largest_block_bruteforce(occ)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=2), st.sampled_from([1.0, 2.0, 3.5]))
def test_cube_lattice_covering(x, n):
    lat = CubeLattice(n, 2)
    count = lat.covering_count(np.array([x]))[0]
    assert 1 <= count <= 4
    hits = [j for j in lat.indices_meeting(np.array(x), np.array(x)) if lat.contains(j, np.array([x]))[0]]
    assert len(hits) == count


def test_cube_lattice_nesting():
    lat = CubeLattice(2, 2)
    j = (1, -1)
    lo1, hi1 = lat.cube(j)
    lo2, hi2 = lat.cube(j, 2)
    lo3, hi3 = lat.cube(j, 3)
    np.testing.assert_allclose(hi1 - lo1, [4, 4])
    np.testing.assert_allclose((lo1 + hi1) / 2, [2, -2])
    assert np.all(lo3 <= lo2) and np.all(lo2 <= lo1) and np.all(hi1 <= hi2) and np.all(hi2 <= hi3)


def test_interval_one_node_primitive():
    dom = DomainSpec(1, (Interval(0, 0.3),))
    with pytest.raises(UnresolvedFeatureError):
        rasterize(dom, 0.5)
