import math

import numpy as np
import pytest

from eggrid import fixtures
from eggrid.curvature import gaussian_curvature
from eggrid.patchlayout import build_geodesic_quad
from eggrid.splitting import (
    PatchNetwork,
    SplitError,
    detect_shared_boundaries,
    eta_check,
    injectivity_bound,
    region_area,
    region_vector_area,
    split_corner_at_peak,
    split_edge_over_peak,
    workflow1,
)


@pytest.fixture(scope="module")
def flat_quad(flat21):
    return build_geodesic_quad(flat21, [flat21.surface_point_near(p) for p in
                               [(0.1, 0.1, 0), (0.9, 0.1, 0),
                                (0.9, 0.9, 0), (0.1, 0.9, 0)]])


@pytest.fixture(scope="module")
def tall_bump():
    return fixtures.gaussian_bump(41, 41, amp=0.6, sigma=0.3)


@pytest.fixture(scope="module")
def bump_quad(tall_bump):
    b = tall_bump
    return build_geodesic_quad(b, [b.surface_point_near(p) for p in
                               [(0.3, 0.3, 0), (1.7, 0.3, 0),
                                (1.7, 1.7, 0), (0.3, 1.7, 0)]])


# --------------------------------------------------------------- injectivity

def test_injectivity_unit_sphere(sphere3):
    assert injectivity_bound(sphere3) == pytest.approx(math.pi, rel=0.02)


def test_injectivity_kmax_four():
    m = fixtures.icosphere(3, radius=0.5)
    assert injectivity_bound(m) == pytest.approx(math.pi / 2, rel=0.02)


def test_injectivity_flat_unbounded(flat21):
    assert injectivity_bound(flat21) == math.inf


# ----------------------------------------------------------------------- eta

def test_eta_flat_exactly_one(flat21, flat_quad):
    rep = eta_check(flat21, flat_quad, "u")
    assert rep.eta == 1.0
    assert rep.r == math.inf


def test_eta_tall_bump_fails(tall_bump, bump_quad):
    rep = eta_check(tall_bump, bump_quad, "u")
    assert rep.eta > 1.0015
    # peak located at the bump apex
    assert tall_bump.point(rep.p_max)[2] == pytest.approx(0.6, abs=0.01)
    # injectivity bound from Eq. (1): K_max = (amp/sigma^2)^2
    k_exact = (0.6 / 0.3 ** 2) ** 2
    assert rep.r == pytest.approx(math.pi / math.sqrt(k_exact), rel=0.15)


def test_eta_gentle_bump_passes():
    b = fixtures.gaussian_bump(31, 31, amp=0.15, sigma=0.6)
    q = build_geodesic_quad(b, [b.surface_point_near(p) for p in
                            [(0.4, 0.4, 0), (1.6, 0.4, 0),
                             (1.6, 1.6, 0), (0.4, 1.6, 0)]])
    rep = eta_check(b, q, "u")
    assert rep.eta <= 1.0015


def test_eta_endpoints_on_family_sides(tall_bump, bump_quad):
    rep = eta_check(tall_bump, bump_quad, "u")
    p1 = tall_bump.point(rep.p1)
    q1 = tall_bump.point(rep.q1)
    # family u runs from side 0 (y=0.3) to side 2 (y=1.7)
    assert p1[1] == pytest.approx(0.3, abs=0.05)
    assert q1[1] == pytest.approx(1.7, abs=0.05)


# -------------------------------------------------------------------- splits

def test_split_edge_flat_rectangles(flat21, flat_quad):
    pc = flat21.surface_point_near([0.5, 0.5, 0])
    left, right = split_edge_over_peak(flat21, flat_quad, pc, "u")
    for child in (left, right):
        lens = sorted(child.side_lengths())
        assert lens == pytest.approx([0.4, 0.4, 0.8, 0.8], abs=1e-3)
    assert (region_area(flat21, left) + region_area(flat21, right)
            == pytest.approx(region_area(flat21, flat_quad), rel=1e-3))


def test_split_corner_flat_rectangles(flat21, flat_quad):
    pc = flat21.surface_point_near([0.5, 0.5, 0])
    kids = split_corner_at_peak(flat21, flat_quad, pc)
    assert len(kids) == 4
    areas = [region_area(flat21, k) for k in kids]
    assert np.allclose(areas, 0.16, atol=1e-6)


def test_split_children_share_edge(flat21, flat_quad):
    pc = flat21.surface_point_near([0.5, 0.5, 0])
    left, right = split_edge_over_peak(flat21, flat_quad, pc, "u")
    net = detect_shared_boundaries(flat21, PatchNetwork([left, right]))
    assert len(net.shared) == 1


def test_split_peak_on_corner_rejected(flat21, flat_quad):
    with pytest.raises(SplitError):
        split_edge_over_peak(flat21, flat_quad,
                             flat21.surface_point_near([0.1, 0.1, 0]), "u")


def test_split_peak_on_boundary_rejected(flat21, flat_quad):
    with pytest.raises(SplitError):
        split_corner_at_peak(flat21, flat_quad,
                             flat21.surface_point_near([0.5, 0.1, 0]))


def test_split_tiny_quad_rejected(flat21):
    q = build_geodesic_quad(flat21, [flat21.surface_point_near(p) for p in
                            [(0.45, 0.45, 0), (0.55, 0.45, 0),
                             (0.55, 0.55, 0), (0.45, 0.55, 0)]])
    with pytest.raises(SplitError):
        split_corner_at_peak(flat21, q,
                             flat21.surface_point_near([0.5, 0.5, 0]))


def test_split_bump_symmetric(tall_bump, bump_quad):
    rep = eta_check(tall_bump, bump_quad, "u")
    left, right = split_edge_over_peak(tall_bump, bump_quad, rep.p_max, "u")
    # mirror-symmetric halves of a radially symmetric bump
    assert (region_area(tall_bump, left)
            == pytest.approx(region_area(tall_bump, right), rel=0.05))


def test_corner_split_bump_equal_areas(tall_bump, bump_quad):
    rep = eta_check(tall_bump, bump_quad, "u")
    kids = split_corner_at_peak(tall_bump, bump_quad, rep.p_max)
    areas = [region_area(tall_bump, k) for k in kids]
    assert max(areas) / min(areas) < 1.12
    # shared split edges cancel between siblings, so the children's vector
    # areas sum to the parent's
    vecs = [region_vector_area(tall_bump, k) for k in kids]
    total = region_vector_area(tall_bump, bump_quad)
    assert np.linalg.norm(sum(vecs) - total) < 0.01 * np.linalg.norm(total)


# ----------------------------------------------------------------- workflows

def test_workflow1_flat_unchanged(flat21, flat_quad):
    net = workflow1(flat21, PatchNetwork([flat_quad]))
    assert len(net.patches) == 1
    assert net.final


def test_workflow1_eta_inf_no_splits(tall_bump, bump_quad):
    net = workflow1(tall_bump, PatchNetwork([bump_quad]),
                    eta_max=math.inf, k_min=1e-6, k_max=1e6)
    assert len(net.patches) == 1
