import math

import numpy as np
import pytest

from eggrid import fixtures
from eggrid.geodesics import shortest_geodesic
from eggrid.patchlayout import (
    InfeasibleLayout,
    PatchError,
    build_geodesic_quad,
    construct_planar_quad,
    diagonal_check,
    feasible_alpha_interval,
    intersect_distance_maps,
    optimize_alpha,
    planar_distance_map,
    surface_distance_map,
)


@pytest.fixture(scope="module")
def flat_quad(flat21):
    corners = [flat21.surface_point_near(p) for p in
               [(0.1, 0.1, 0), (0.9, 0.1, 0), (0.9, 0.9, 0), (0.1, 0.9, 0)]]
    return build_geodesic_quad(flat21, corners)


@pytest.fixture(scope="module")
def cap_quad(sphere4):
    th = 0.55
    pts = [(math.sin(th) * math.cos(a), math.sin(th) * math.sin(a), math.cos(th))
           for a in (math.radians(d) for d in (225, 315, 45, 135))]
    return build_geodesic_quad(sphere4, [sphere4.surface_point_near(p) for p in pts])


@pytest.fixture(scope="module")
def cap_dmaps(sphere4, cap_quad):
    return {f: surface_distance_map(sphere4, cap_quad, f) for f in ("u", "v")}


# ---------------------------------------------------------------- planar quad

def test_planar_quad_rectangle():
    pq = construct_planar_quad([2.0, 1.0, 2.0, 1.0], math.pi / 2)
    c = pq.corners
    assert np.allclose(c, [[0, 0], [2, 0], [2, 1], [0, 1]], atol=1e-12)


def test_planar_quad_rhombus_60deg():
    a = math.pi / 3
    pq = construct_planar_quad([1.0, 1.0, 1.0, 1.0], a)
    c = pq.corners
    assert np.allclose(c[3], [0.5, math.sqrt(3) / 2], atol=1e-12)
    # rhombus: c2 = c1 + c3
    assert np.allclose(c[2], c[1] + c[3], atol=1e-9)
    d_long = np.linalg.norm(c[2] - c[0])
    d_short = np.linalg.norm(c[3] - c[1])
    assert d_long == pytest.approx(math.sqrt(3), abs=1e-9)
    assert d_short == pytest.approx(1.0, abs=1e-9)


def test_planar_quad_side_lengths_preserved():
    lengths = [1.3, 0.8, 1.1, 0.9]
    pq = construct_planar_quad(lengths, 1.2)
    c = pq.corners
    got = [np.linalg.norm(c[1] - c[0]), np.linalg.norm(c[2] - c[1]),
           np.linalg.norm(c[2] - c[3]), np.linalg.norm(c[3] - c[0])]
    assert np.allclose(got, lengths, atol=1e-12)


def test_planar_quad_nonconvex_rejected():
    # impossible quad: one side longer than the sum of the others
    with pytest.raises(PatchError):
        construct_planar_quad([10.0, 1.0, 1.0, 1.0], math.pi / 2)


def test_feasible_alpha_interval_square():
    lo, hi = feasible_alpha_interval([1.0, 1.0, 1.0, 1.0])
    assert lo < math.pi / 2 < hi
    # equal opposite sides collapse almost fully in both directions
    assert lo < math.radians(5)
    assert hi > math.radians(175)


def test_planar_distance_map_rectangle_columns():
    pq = construct_planar_quad([2.0, 1.0, 2.0, 1.0], math.pi / 2)
    pd = planar_distance_map(pq, "u")
    u = np.linspace(0, 1, 9)
    # same parameter on both sides of a rectangle: vertical distance 1
    assert np.allclose(pd(u, u), 1.0, atol=1e-12)
    # corner-to-corner diagonal
    assert pd(0.0, np.array([1.0]))[0] == pytest.approx(math.hypot(2, 1))


# --------------------------------------------------------------- quad on mesh

def test_quad_side_lengths_flat(flat21, flat_quad):
    # straight sides of the 0.8 x 0.8 square
    assert np.allclose(flat_quad.side_lengths(), 0.8, atol=1e-9)


def test_quad_coincident_corners_rejected(flat21):
    c = flat21.surface_point_near([0.2, 0.2, 0])
    pts = [c, c,
           flat21.surface_point_near([0.8, 0.8, 0]),
           flat21.surface_point_near([0.2, 0.8, 0])]
    with pytest.raises(PatchError):
        build_geodesic_quad(flat21, pts)


def test_quad_boundary_param_positions(flat21, flat_quad):
    # side 0 runs c0 -> c1 at constant speed
    bp = flat_quad.params[0]
    for t in (0.0, 0.25, 0.5, 1.0):
        p = bp.position(t)
        assert p[0] == pytest.approx(0.1 + 0.8 * t, abs=1e-6)
        assert p[1] == pytest.approx(0.1, abs=1e-6)


def test_distance_map_exact_matches_geodesic(flat21, flat_quad):
    dm = surface_distance_map(flat21, flat_quad, "u", resolution=17)
    i = 8
    a = dm.src_param.at(float(dm.u1[i]))
    b = dm.dst_param.at(0.37)
    expect = shortest_geodesic(flat21, a, b).length
    assert dm.exact(i, 0.37, flat21) == pytest.approx(expect, abs=1e-12)


def test_distance_map_grid_upper_bounds_metric(flat21, flat_quad):
    # the graph metric never underestimates the straightened distance
    dm = surface_distance_map(flat21, flat_quad, "u", resolution=17)
    for i in (0, 8, 16):
        for j in (0, 8, 16):
            if not dm.mask[i, j]:
                continue
            exact = dm.exact(i, float(dm.u2[j]), flat21)
            assert dm.grid[i, j] >= exact - 1e-9


# ----------------------------------------------------------- cladding on flat

def test_flat_cladding_identity(flat21, flat_quad):
    pq = construct_planar_quad(flat_quad.side_lengths(), math.pi / 2)
    tol = 1e-6 * flat_quad.diameter(flat21)
    dm = surface_distance_map(flat21, flat_quad, "u")
    phi = intersect_distance_maps(dm, planar_distance_map(pq, "u"), flat21, tol)
    assert np.abs(phi.u2 - phi.u1).max() < 1e-9
    assert phi.residuals.max() <= tol


def test_flat_cladding_round_trip(flat21, flat_quad):
    pq = construct_planar_quad(flat_quad.side_lengths(), math.pi / 2)
    dm = surface_distance_map(flat21, flat_quad, "u")
    phi = intersect_distance_maps(dm, planar_distance_map(pq, "u"))
    for u in np.linspace(0.05, 0.95, 7):
        assert phi.inverse(phi(u)) == pytest.approx(u, abs=1e-6)


def test_flat_optimize_alpha_congruent(flat21, flat_quad):
    planar, phi_u, phi_v = optimize_alpha(flat21, flat_quad)
    # the flat square patch is congruent to its planar layout
    assert math.degrees(planar.alpha) == pytest.approx(90.0, abs=0.5)
    for phi in (phi_u, phi_v):
        assert phi.slope_min == pytest.approx(1.0, abs=1e-3)
        assert phi.slope_max == pytest.approx(1.0, abs=1e-3)


def test_flat_diagonal_check_degenerate(flat21, flat_quad):
    rep = diagonal_check(flat21, flat_quad)
    assert rep.degenerate
    assert rep.verdict == "fail"


# ----------------------------------------------------------- sphere cap patch

def _cap_exact_diagonal(th):
    """Great-circle distance between opposite corners at polar angle th."""
    a = np.array([math.sin(th), 0, math.cos(th)])
    b = np.array([-math.sin(th), 0, math.cos(th)])
    return math.acos(float(np.clip(a @ b, -1, 1)))


def test_cap_diagonals_match_analytic(sphere4, cap_quad):
    rep = diagonal_check(sphere4, cap_quad)
    exact = _cap_exact_diagonal(0.55)
    assert rep.e == pytest.approx(exact, rel=0.01)
    assert rep.f == pytest.approx(exact, rel=0.01)


def test_cap_diagonal_check_passes(sphere4, cap_quad):
    rep = diagonal_check(sphere4, cap_quad)
    assert rep.verdict == "pass"
    assert not rep.degenerate
    # at the matched angle the other planar diagonal is shorter: the
    # surface bulge must be compensated with the opposite sign
    assert rep.f_bar < rep.f


def test_cap_cladding_monotone_bijective(sphere4, cap_quad, cap_dmaps):
    pq = construct_planar_quad(cap_quad.side_lengths(), math.radians(70.0))
    phi = intersect_distance_maps(cap_dmaps["u"], planar_distance_map(pq, "u"))
    assert np.all(np.diff(phi.u2) > 0)
    assert phi.slope_min > 0
    # synclastic patch at alpha below the matched angle: level set bulges
    # above the diagonal
    mid = phi(0.5)
    assert mid > 0.5


def test_cap_cladding_infeasible_near_matched_angle(sphere4, cap_quad, cap_dmaps):
    # at the e-matching angle the planar map is everywhere below the
    # surface map, so no level set exists for a full-span cladding
    pq = construct_planar_quad(cap_quad.side_lengths(), math.radians(90.0))
    with pytest.raises(InfeasibleLayout):
        intersect_distance_maps(cap_dmaps["u"], planar_distance_map(pq, "u"))


def test_cap_optimize_alpha_condition_i(sphere4, cap_quad, cap_dmaps):
    planar, phi_u, phi_v = optimize_alpha(sphere4, cap_quad, dmaps=cap_dmaps)
    tol = 1e-6 * cap_quad.diameter(sphere4)
    assert phi_u.residuals.max() <= tol
    assert phi_v.residuals.max() <= tol
    for phi in (phi_u, phi_v):
        assert 0.2 <= phi.slope_min <= phi.slope_max <= 5.0


def test_cap_slope_bounds_nested(sphere4, cap_quad, cap_dmaps):
    # tightening the slope bounds can only shrink the feasible alpha set:
    # an optimum under tight bounds stays feasible under loose ones
    planar, phi_u, phi_v = optimize_alpha(sphere4, cap_quad, k_min=0.5,
                                          k_max=2.0, dmaps=cap_dmaps)
    for phi in (phi_u, phi_v):
        assert 0.5 <= phi.slope_min <= phi.slope_max <= 2.0
        assert 0.2 <= phi.slope_min <= phi.slope_max <= 5.0


def test_cap_infeasible_bounds_raise(sphere4, cap_quad, cap_dmaps):
    with pytest.raises(InfeasibleLayout):
        optimize_alpha(sphere4, cap_quad, k_min=0.999, k_max=1.001,
                       dmaps=cap_dmaps)


# ---------------------------------------------------------------- saddle quad

def test_saddle_diagonal_check(saddle_mesh):
    pts = [(0.45, 0.45, 0), (1.55, 0.45, 0), (1.55, 1.55, 0), (0.45, 1.55, 0)]
    corners = [saddle_mesh.surface_point_near(p) for p in pts]
    quad = build_geodesic_quad(saddle_mesh, corners)
    rep = diagonal_check(saddle_mesh, quad)
    assert rep.verdict == "pass"
    assert not rep.degenerate
