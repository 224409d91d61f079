"""End-to-end acceptance checks for the pipeline.

One test (or small group) per criterion; heavier fixtures are module-scoped
and shared.  Numeric bounds mirror the published laws the implementation
targets, not tuned-to-pass values.
"""
import json
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from eggrid import fixtures
from eggrid.cli import main
from eggrid.curvature import gaussian_curvature
from eggrid.geodesics import GraphDistance, shortest_geodesic
from eggrid.gridexport import (
    audit_layout,
    build_planar_layout,
    compute_notches,
)
from eggrid.members import (
    distribute_members,
    naive_members,
    objective_eval,
)
from eggrid.mesh import SurfacePoint, dump_mesh_obj
from eggrid.patchlayout import (
    CladdingFunction,
    build_geodesic_quad,
    construct_planar_quad,
    diagonal_check,
    intersect_distance_maps,
    planar_distance_map,
    surface_distance_map,
)
from eggrid.sim import (
    BIRCH_PLYWOOD,
    LIMEWOOD,
    assemble_network,
    bending_stress,
    gravity_load,
    material_study,
    nrmse,
    scaling_study,
    solve_equilibrium,
)
from eggrid.splitting import (
    PatchNetwork,
    eta_check,
    injectivity_bound,
    workflow1,
    workflow2,
)

W, T = 0.05, 0.01
ETA_MAX = 1.0015


def identity_cladding(family):
    u = np.linspace(0, 1, 17)
    return CladdingFunction(family, u, u)


# ----------------------------------------------------------- shared fixtures


@pytest.fixture(scope="module")
def sphere5():
    return fixtures.icosphere(5)


@pytest.fixture(scope="module")
def cyl10k():
    return fixtures.cylinder_band(n_around=160, n_along=65)


@pytest.fixture(scope="module")
def flat_setup(flat21):
    quad = build_geodesic_quad(flat21, [flat21.surface_point_near(p) for p in
                               [(0.1, 0.1, 0), (0.9, 0.1, 0),
                                (0.9, 0.9, 0), (0.1, 0.9, 0)]])
    net = PatchNetwork([quad], final=True)
    phis = {"u": identity_cladding("u"), "v": identity_cladding("v")}
    members = {f: distribute_members(net, flat21, {0: phis[f]}, f, 3)
               for f in ("u", "v")}
    planar = construct_planar_quad(quad.side_lengths(), math.pi / 2)
    cladding = {0: {"planar": planar, "u": phis["u"], "v": phis["v"]}}
    layout = build_planar_layout(net, members, cladding, W, T)[0]
    return quad, compute_notches(flat21, quad, layout)


@pytest.fixture(scope="module")
def cap_setup(sphere4):
    corners = []
    for az in (225, 315, 45, 135):
        a = math.radians(az)
        corners.append(sphere4.surface_point_near(
            [math.sin(0.55) * math.cos(a), math.sin(0.55) * math.sin(a),
             math.cos(0.55)]))
    quad = build_geodesic_quad(sphere4, corners)
    net = PatchNetwork([quad], final=True)
    tol = 1e-6 * quad.diameter(sphere4)
    planar = construct_planar_quad(quad.side_lengths(), math.radians(70))
    phis = {}
    for f in ("u", "v"):
        dmap = surface_distance_map(sphere4, quad, f)
        phis[f] = intersect_distance_maps(dmap, planar_distance_map(planar, f),
                                          sphere4, tol)
    members = {f: distribute_members(net, sphere4, {0: phis[f]}, f, 3)
               for f in ("u", "v")}
    cladding = {0: {"planar": planar, "u": phis["u"], "v": phis["v"]}}
    layout = build_planar_layout(net, members, cladding, W, T,
                                 mesh=sphere4)[0]
    return quad, compute_notches(sphere4, quad, layout)


# ------------------------------------------- 1. geodesic oracles and runtime


def _timed_query(mesh, a, b):
    t0 = time.perf_counter()
    poly = shortest_geodesic(mesh, a, b)
    return poly, time.perf_counter() - t0


def test_sphere_great_circle_oracle(sphere5):
    assert len(sphere5.vertices) > 9000
    a = SurfacePoint(0, (1.0, 0.0, 0.0))
    # warm-up populates the per-mesh Steiner graph cache
    shortest_geodesic(sphere5, a, SurfacePoint(10, (1.0, 0.0, 0.0)))
    pa = sphere5.point(a)
    R = np.linalg.norm(pa)
    for k in (0, 7, 14):
        b = SurfacePoint(len(sphere5.faces) // 2 + k, (0.3, 0.3, 0.4))
        poly, dt = _timed_query(sphere5, a, b)
        pb = sphere5.point(b)
        cosang = np.dot(pa, pb) / (np.linalg.norm(pa) * np.linalg.norm(pb))
        exact = R * math.acos(max(-1.0, min(1.0, float(cosang))))
        assert abs(poly.length - exact) / exact < 0.01
        assert dt < 1.0


def test_cylinder_unrolling_oracle(cyl10k):
    assert len(cyl10k.vertices) > 9000
    a = SurfacePoint(0, (1.0, 0.0, 0.0))
    shortest_geodesic(cyl10k, a, SurfacePoint(10, (1.0, 0.0, 0.0)))
    pa = cyl10k.point(a)
    R = math.hypot(pa[0], pa[1])
    for k in (0, 7, 14):
        b = SurfacePoint(len(cyl10k.faces) // 2 + k, (0.3, 0.3, 0.4))
        poly, dt = _timed_query(cyl10k, a, b)
        pb = cyl10k.point(b)
        dth = abs(math.atan2(pa[1], pa[0]) - math.atan2(pb[1], pb[0]))
        dth = min(dth, 2 * math.pi - dth)
        exact = math.hypot(dth * R, pa[2] - pb[2])
        assert abs(poly.length - exact) / exact < 0.01
        assert dt < 1.0


# --------------------------------------- 2. condition (i)/(ii) layout audits


def test_condition_audits_zero_violations(flat21, sphere4, flat_setup,
                                          cap_setup):
    for mesh, (quad, layout) in ((flat21, flat_setup), (sphere4, cap_setup)):
        tol = 1e-6 * quad.diameter(mesh)
        # condition (i): planar lengths equal independent surface geodesics
        assert audit_layout(mesh, quad, layout) <= tol
        # condition (ii): boundary members carry identical coordinates in
        # plan and on surface -- their crossings sit at the guests' boundary
        # coordinates scaled by the member length
        for con in layout.connections:
            host = layout.lamellae[con.host]
            guest = layout.lamellae[con.guest]
            if host.boundary:
                cands = [guest.coord_in * host.length,
                         guest.coord_out * host.length]
                assert min(abs(con.s_host - c) for c in cands) <= tol
            if guest.boundary:
                cands = [host.coord_in * guest.length,
                         host.coord_out * guest.length]
                assert min(abs(con.s_guest - c) for c in cands) <= tol


# ------------------------------------------------------------ 3. eta checks


def test_eta_flat_exactly_one(flat21, flat_setup):
    quad, _ = flat_setup
    for family in ("u", "v"):
        assert eta_check(flat21, quad, family).eta == 1.0


@pytest.fixture(scope="module")
def bumps2():
    return fixtures.two_bumps()


def test_eta_two_bumps_split_by_workflow1(bumps2):
    quad = build_geodesic_quad(bumps2, [bumps2.surface_point_near(p) for p in
                               [(0.4, 0.4, 0), (2.6, 0.4, 0),
                                (2.6, 1.6, 0), (0.4, 1.6, 0)]])
    etas = [eta_check(bumps2, quad, f).eta for f in ("u", "v")]
    assert max(etas) > ETA_MAX          # fails before splitting
    net = workflow1(bumps2, PatchNetwork([quad]), eta_max=ETA_MAX)
    assert len(net.patches) > 1
    for q in net.patches:
        for family in ("u", "v"):
            rep = eta_check(bumps2, q, family)
            assert rep.boundary_peak or rep.eta <= ETA_MAX


def test_workflow2_first_patch_on_injectivity_circle():
    mesh = fixtures.gaussian_bump(41, 41, amp=0.18, sigma=0.22)
    K = gaussian_curvature(mesh).values
    interior = ~mesh.boundary_vertices
    r = math.pi / math.sqrt(float(K[interior].max()))
    assert r == pytest.approx(injectivity_bound(mesh), rel=1e-9)
    net = workflow2(mesh)
    peak = int(np.where(interior)[0][np.argmax(K[interior])])
    psp = mesh.surface_point_near(mesh.vertices[peak])
    for corner in net.patches[0].corners:
        d = shortest_geodesic(mesh, psp, corner).length
        assert 0.9 * r <= d <= 1.1 * r


# ------------------------------------------------- 4. Eq. (2) diagonal check


def test_diagonal_check_sphere_cap(sphere4, cap_setup):
    quad, _ = cap_setup
    rep = diagonal_check(sphere4, quad)
    assert rep.verdict == "pass"
    assert not rep.degenerate
    assert (rep.e - rep.e_bar) * (rep.f - rep.f_bar) < 0
    # verify the reported diagonals against independent dense-graph lengths
    # (graph distance is an upper bound a fraction of a percent above)
    ge = GraphDistance(sphere4, quad.corners[0]).eval(quad.corners[2])
    gf = GraphDistance(sphere4, quad.corners[1]).eval(quad.corners[3])
    assert rep.e <= ge <= 1.01 * rep.e
    assert rep.f <= gf <= 1.01 * rep.f


def test_diagonal_check_flat_degenerate(flat21, flat_setup):
    quad, _ = flat_setup
    assert diagonal_check(flat21, quad).degenerate


# ------------------------------------------------- 5. member distribution


class _Phi:
    def __init__(self, f, finv):
        self.f, self.finv = f, finv

    def __call__(self, u):
        return float(self.f(u))

    def inverse(self, y):
        return float(self.finv(y))


class _Param:
    def __init__(self, length):
        self.length = length


class _Quad:
    def __init__(self, lens=(1, 1, 1, 1)):
        self.params = [_Param(l) for l in lens]


def _two_row_network():
    net = PatchNetwork([_Quad(), _Quad()], shared=[((0, 2), (1, 0), False)])
    clads = {0: _Phi(lambda u: u, lambda y: y),
             1: _Phi(lambda u: u ** 3, lambda y: y ** (1 / 3))}
    return net, clads


def test_optimized_objective_beats_naive():
    net, clads = _two_row_network()
    f_naive = objective_eval(naive_members(net, None, clads, "u", 5))
    f_opt = objective_eval(distribute_members(net, None, clads, "u", 5))
    assert f_opt <= f_naive
    assert (f_naive - f_opt) / f_naive >= 0.05


def test_members_c0_and_ordering():
    net, clads = _two_row_network()
    ms = distribute_members(net, None, clads, "u", 5)
    keys = [b.key for b in ms.boundaries]
    # C0: the shared boundary (0,2)==(1,0) is stored exactly once
    assert keys.count((0, 2)) == 1 and (1, 0) not in keys
    for b in ms.boundaries:
        assert np.all(np.diff(b.coords) > 0)
        assert b.coords[0] == 0.0 and b.coords[-1] == 1.0


# ------------------------------------------------------- 6. scaling law


def test_scaling_law_fig8(flat21, sphere4, flat_setup, cap_setup):
    t0 = time.perf_counter()
    # gravity off: linear scaling leaves the doubly curved cap unchanged
    quad, layout = cap_setup
    off = scaling_study(sphere4, quad, layout, LIMEWOOD, W, T,
                        [1.0, 2.0, 4.0], gravity=False)
    # gravity on: the bending-dominated flat grid sags progressively
    fquad, flayout = flat_setup
    on = scaling_study(flat21, fquad, flayout, BIRCH_PLYWOOD, W, T,
                       [1.0, 2.0, 4.0], gravity=True)
    elapsed = time.perf_counter() - t0
    assert all(r["error"] is None for r in off + on)
    base = off[0]["nrmse"]
    for r in off:
        assert abs(r["nrmse"] - base) <= 0.20 * base
    nr = [r["nrmse"] for r in on]
    assert nr[0] <= nr[1] and nr[1] <= nr[2]
    assert elapsed < 600.0


# ------------------------------------------------------- 7. stress laws


def test_bending_stress_scale_cancellation():
    for f in (2.0, 4.0, 8.0):
        assert bending_stress(LIMEWOOD, 1.7 / f, 1e-3 * f) == \
            bending_stress(LIMEWOOD, 1.7, 1e-3)


def test_gravity_load_cubic_exact():
    assert gravity_load(T, W, 1.3, 2.0, 500.0) == \
        8.0 * gravity_load(T, W, 1.3, 1.0, 500.0)


def test_limewood_specific_modulus_table2():
    assert LIMEWOOD.E == 9.1e9 and LIMEWOOD.rho == 500.0
    assert LIMEWOOD.lam == pytest.approx(18.2e6, rel=5e-4)


# ------------------------------------------------------ 8. material study


def test_material_study_fig11(flat21, flat_setup):
    quad, layout = flat_setup
    rows = material_study(flat21, quad, layout,
                          [LIMEWOOD, BIRCH_PLYWOOD], 5.0, W, T)
    by_name = {r["material"]: r for r in rows}
    assert by_name["limewood"]["nrmse"] < by_name["birch-plywood"]["nrmse"]


# ---------------------------------------------------- 9. simulation sanity


def test_flat_equilibrium_energy_negligible(flat21, flat_setup):
    quad, layout = flat_setup
    net = assemble_network(flat21, quad, layout, LIMEWOOD, W, T)
    res = solve_equilibrium(net)
    assert res.converged
    scale = LIMEWOOD.E * W * T * sum(l.length for l in layout.lamellae)
    assert (res.energies["bend"] + res.energies["twist"]) / scale < 1e-10


def test_cap_nrmse_below_half_width(sphere4, cap_setup):
    quad, layout = cap_setup
    net = assemble_network(sphere4, quad, layout, LIMEWOOD, W, T)
    res = solve_equilibrium(net)
    assert nrmse(res.positions, sphere4, 1.0) <= 0.5 * W


# -------------------------------------------------------- 10. determinism


def test_cli_pipeline_byte_identical(flat21, tmp_path):
    obj = tmp_path / "flat.obj"
    obj.write_text(dump_mesh_obj(flat21))
    corners = tmp_path / "corners.json"
    corners.write_text(json.dumps([[0.1, 0.1, 0], [0.9, 0.1, 0],
                                   [0.9, 0.9, 0], [0.1, 0.9, 0]]))
    runner = CliRunner()
    blobs = []
    for run in range(2):
        proj = tmp_path / f"p{run}.json"
        out = tmp_path / f"l{run}.json"
        for args in (["patch", str(obj), "--corners", str(corners),
                      "-o", str(proj)],
                     ["layout", str(proj)],
                     ["members", str(proj), "--count-u", "3",
                      "--count-v", "3"],
                     ["export", str(proj), "--format", "json",
                      "-o", str(out)]):
            r = runner.invoke(main, args)
            assert r.exit_code == 0, r.output
        blobs.append((proj.read_bytes(), out.read_bytes()))
    assert blobs[0][1] == blobs[1][1]
    assert blobs[0][0] == blobs[1][0]
