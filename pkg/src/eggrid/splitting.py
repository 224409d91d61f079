"""Surface splitting: coverage checks (injectivity bound, eta ratio),
peak splits and the two patching workflows."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import gaussian_curvature
from .geodesics import (
    GeodesicError,
    GraphDistance,
    geodesic_circle,
    shortest_geodesic,
)
from .mesh import GeodesicPolyline, SurfacePoint, TriMesh
from .patchlayout import (
    FAMILY_SIDES,
    SIDE_CORNERS,
    BoundaryParam,
    GeodesicQuad,
    InfeasibleLayout,
    PatchError,
    build_geodesic_quad,
    optimize_alpha,
    surface_distance_map,
)

ETA_MAX_DEFAULT = 1.0015


class SplitError(PatchError):
    pass


# -------------------------------------------------------------------------
# Patch region on the mesh


def _support(mesh, sp):
    verts = [int(v) for v in mesh.faces[sp.face]]
    return [v for v, w in zip(verts, sp.bary) if w > 1e-9]


def _barrier_faces(mesh, quad):
    """Faces touched by the boundary polylines (flood-fill barrier)."""
    barrier = set()
    for poly in quad.boundaries:
        for sp in poly.points:
            spc = sp.canonical(mesh)
            sup = _support(mesh, spc)
            if len(sup) == 1:
                barrier.update(mesh.vertex_faces[sup[0]])
            elif len(sup) == 2:
                key = (min(sup), max(sup))
                barrier.update(fi for fi, _ in mesh.edge_faces[key])
            else:
                barrier.add(spc.face)
    return barrier


def _seed_candidates(mesh, quad):
    pos = [mesh.point(c) for c in quad.corners]
    weights = [(0.25, 0.25, 0.25, 0.25), (0.4, 0.4, 0.1, 0.1),
               (0.1, 0.4, 0.4, 0.1), (0.1, 0.1, 0.4, 0.4),
               (0.4, 0.1, 0.1, 0.4)]
    for w in weights:
        p = sum(wi * pi for wi, pi in zip(w, pos))
        yield mesh.surface_point_near(p)


def region_faces(mesh: TriMesh, quad: GeodesicQuad):
    """Faces inside the quad: flood fill from the center, boundary-strip
    faces act as barrier and are included in the result."""
    barrier = _barrier_faces(mesh, quad)
    seed = None
    for sp in _seed_candidates(mesh, quad):
        if sp.face not in barrier:
            seed = sp.face
            break
    if seed is None:
        # tiny patch: the boundary strip covers everything
        return barrier
    filled = set()
    stack = [seed]
    while stack:
        fi = stack.pop()
        if fi in filled or fi in barrier:
            continue
        filled.add(fi)
        for k in range(3):
            fj = mesh.neighbor_across(fi, k)
            if fj >= 0 and fj not in filled and fj not in barrier:
                stack.append(fj)
    return filled | barrier


def interior_vertices(mesh: TriMesh, quad: GeodesicQuad, faces=None):
    """Vertices all of whose incident faces lie strictly inside the quad."""
    faces = region_faces(mesh, quad) if faces is None else faces
    barrier = _barrier_faces(mesh, quad)
    inner = faces - barrier
    verts = set()
    for fi in inner:
        verts.update(int(v) for v in mesh.faces[fi])
    return np.array(sorted(v for v in verts
                           if all(fi in inner for fi in mesh.vertex_faces[v])),
                    dtype=int)


def boundary_loop_positions(mesh: TriMesh, quad: GeodesicQuad) -> np.ndarray:
    """Closed CCW loop of boundary sample positions (c0 -> c1 -> c2 -> c3)."""
    p0 = quad.boundaries[0].positions(mesh)
    p1 = quad.boundaries[1].positions(mesh)
    p2 = quad.boundaries[2].positions(mesh)[::-1]
    p3 = quad.boundaries[3].positions(mesh)[::-1]
    return np.vstack([p0[:-1], p1[:-1], p2[:-1], p3])


def region_vector_area(mesh: TriMesh, quad: GeodesicQuad) -> np.ndarray:
    """Vector area of the boundary loop (chord-based; shared split edges
    cancel exactly between siblings, so children's vectors sum to the
    parent's)."""
    loop = boundary_loop_positions(mesh, quad)
    v = loop - loop.mean(axis=0)
    cross = np.cross(v[:-1], v[1:])
    return 0.5 * cross.sum(axis=0)


def region_area(mesh: TriMesh, quad: GeodesicQuad) -> float:
    return float(np.linalg.norm(region_vector_area(mesh, quad)))


# -------------------------------------------------------------------------
# Injectivity bound and eta criterion


def injectivity_bound(mesh: TriMesh, region=None):
    """r = pi / sqrt(K_max) over interior vertices; inf if K_max <= 0."""
    K = gaussian_curvature(mesh).values
    if region is None:
        idx = np.where(~mesh.boundary_vertices)[0]
    else:
        idx = np.asarray(sorted(region), dtype=int)
    if len(idx) == 0:
        return math.inf
    k_max = float(K[idx].max())
    if k_max * mesh.diameter ** 2 < 1e-9:
        # numerically flat region: bound is unbounded
        return math.inf
    return math.pi / math.sqrt(k_max)


@dataclass
class CoverageReport:
    patch_id: int
    family: str
    eta: float
    p_max: SurfacePoint
    p1: SurfacePoint
    q1: SurfacePoint
    r: float
    boundary_peak: bool = False

    def to_dict(self):
        return {"patch_id": self.patch_id, "family": self.family,
                "eta": self.eta, "r": None if math.isinf(self.r) else self.r,
                "boundary_peak": self.boundary_peak}


def _golden_min(fn, lo, hi, iters=16):
    g = (math.sqrt(5) - 1) / 2
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = fn(x2)
    return (x1, f1) if f1 < f2 else (x2, f2)


def _closest_param(mesh, bp, gd, n=65):
    """Parameter on a boundary minimizing the graph distance to gd's source."""
    ts = np.linspace(0.0, 1.0, n)
    vals = [gd.eval(bp.at(t)) for t in ts]
    j = int(np.argmin(vals))
    t, _ = _golden_min(lambda t: gd.eval(bp.at(float(t))),
                       ts[max(0, j - 1)], ts[min(n - 1, j + 1)], iters=12)
    return float(t)


def eta_check(mesh: TriMesh, quad: GeodesicQuad, family: str,
              patch_id: int = 0, samples: int = 65) -> CoverageReport:
    """Coverage ratio around the interior curvature peak (Fig.-5 criterion)."""
    if family not in FAMILY_SIDES:
        raise SplitError(f"unknown family {family!r}")
    sa, sb = FAMILY_SIDES[family]
    faces = region_faces(mesh, quad)
    inner = interior_vertices(mesh, quad, faces)
    K = gaussian_curvature(mesh).values
    r = injectivity_bound(mesh, set(inner))
    if len(inner) == 0:
        return CoverageReport(patch_id, family, 1.0, quad.corners[0],
                              quad.corners[0], quad.corners[0], r,
                              boundary_peak=True)
    region_all = set()
    for fi in faces:
        region_all.update(int(v) for v in mesh.faces[fi])
    all_idx = np.array(sorted(region_all), dtype=int)
    v_all = all_idx[int(np.argmax(K[all_idx]))]
    inner_set = set(int(v) for v in inner)
    v_peak = int(inner[int(np.argmax(K[inner]))])
    boundary_peak = v_all not in inner_set and K[v_all] > K[v_peak] + 1e-12
    p_max = mesh.vertex_point(v_peak)

    gd_peak = GraphDistance(mesh, p_max)
    bp_a, bp_b = quad.params[sa], quad.params[sb]
    t1 = _closest_param(mesh, bp_a, gd_peak, samples)
    p1 = bp_a.at(t1)
    gd_p1 = GraphDistance(mesh, p1)
    ts = np.linspace(0.0, 1.0, samples)
    gap = np.array([gd_peak.eval(bp_b.at(t)) + gd_p1.eval(p_max)
                    - gd_p1.eval(bp_b.at(t)) for t in ts])
    j = int(np.argmin(gap))

    # the 0.15% threshold sits inside graph-metric noise: refine q1 and
    # evaluate the final ratio against straightened lengths
    def sgap(t):
        b = bp_b.at(float(t))
        return (shortest_geodesic(mesh, p_max, b, gd=gd_peak).length
                - shortest_geodesic(mesh, p1, b, gd=gd_p1).length)

    tq, _ = _golden_min(sgap, ts[max(0, j - 1)],
                        ts[min(samples - 1, j + 1)], iters=14)
    q1 = bp_b.at(float(tq))
    d1 = shortest_geodesic(mesh, p1, p_max, gd=gd_p1).length
    d2 = shortest_geodesic(mesh, p_max, q1, gd=gd_peak).length
    d3 = shortest_geodesic(mesh, p1, q1, gd=gd_p1).length
    from .geodesics import geo_tolerance
    if (d1 + d2) - d3 <= 100 * geo_tolerance(mesh):
        # detour below the geodesic solver's own tolerance: no gap
        eta = 1.0
    else:
        eta = max((d1 + d2) / max(d3, 1e-300), 1.0)
    return CoverageReport(patch_id, family, float(eta), p_max, p1, q1, r,
                          boundary_peak=boundary_peak)


# -------------------------------------------------------------------------
# Splits


def _split_param_on_side(mesh, quad, side, p_max, gd=None, samples=129):
    gd = GraphDistance(mesh, p_max) if gd is None else gd
    bp = quad.params[side]
    t = _closest_param(mesh, bp, gd, samples)
    return t


def _check_peak_interior(mesh, quad, p_max):
    pos = mesh.point(p_max)
    diam = quad.diameter(mesh)
    for c in quad.corners:
        if np.linalg.norm(mesh.point(c) - pos) < 1e-3 * diam:
            raise SplitError("p_max coincides with a quad corner")
    for bp in quad.params:
        ts = np.linspace(0, 1, 65)
        dmin = min(np.linalg.norm(bp.position(t) - pos) for t in ts)
        if dmin < 0.5 * mesh.edge_lengths_mean:
            raise SplitError("p_max lies on the quad boundary")


def _child_quad(mesh, corners, special=None):
    """Quad with shortest-geodesic sides except for pre-built ones (the
    via-peak split edge must not be re-solved: the shortest geodesic between
    its endpoints can swing around the peak)."""
    special = special or {}
    boundaries = []
    for k, (ia, ib) in enumerate(SIDE_CORNERS):
        if k in special:
            boundaries.append(special[k])
        else:
            boundaries.append(shortest_geodesic(mesh, corners[ia], corners[ib]))
    quad = GeodesicQuad(list(corners), boundaries)
    quad.params = [BoundaryParam(mesh, b) for b in boundaries]
    return quad


def split_edge_over_peak(mesh: TriMesh, quad: GeodesicQuad, p_max: SurfacePoint,
                         family: str):
    """Split into two children along a new boundary over the peak, joining
    the two boundaries the family members connect."""
    if family not in FAMILY_SIDES:
        raise SplitError(f"unknown family {family!r}")
    _check_peak_interior(mesh, quad, p_max)
    sa, sb = FAMILY_SIDES[family]
    # feet of perpendicular from p_max on both family boundaries: this is
    # deterministic and symmetric even where principal directions degenerate
    # (e.g. umbilic peaks), unlike tracing along an eigendirection
    gd = GraphDistance(mesh, p_max)
    ta = _split_param_on_side(mesh, quad, sa, p_max, gd)
    tb = _split_param_on_side(mesh, quad, sb, p_max, gd)
    if min(ta, tb) < 1e-3 or max(ta, tb) > 1 - 1e-3:
        raise SplitError("new edge fails to separate the quad")
    pa = quad.params[sa].at(ta)
    pb = quad.params[sb].at(tb)
    # new boundary routed through the peak (placing patch boundaries directly
    # over curvature peaks keeps the children coverable)
    leg_a = shortest_geodesic(mesh, p_max, pa, gd=gd)
    leg_b = shortest_geodesic(mesh, p_max, pb, gd=gd)
    pts = list(reversed(leg_a.points)) + list(leg_b.points[1:])
    mid = GeodesicPolyline(pts, leg_a.length + leg_b.length)
    c = quad.corners
    if family == "u":
        # split side0 at pa and side2 at pb; pa -> pb is side1 of the left
        # child and side3 of the right child
        left = _child_quad(mesh, [c[0], pa, pb, c[3]], {1: mid})
        right = _child_quad(mesh, [pa, c[1], c[2], pb], {3: mid})
    else:
        # split side3 at pa and side1 at pb
        bottom = _child_quad(mesh, [c[0], c[1], pb, pa], {2: mid})
        top = _child_quad(mesh, [pa, pb, c[2], c[3]], {0: mid})
        left, right = bottom, top
    return left, right


def split_corner_at_peak(mesh: TriMesh, quad: GeodesicQuad, p_max: SurfacePoint):
    """Split into four children sharing p_max as a common corner."""
    _check_peak_interior(mesh, quad, p_max)
    if min(quad.side_lengths()) < 4.0 * mesh.edge_lengths_mean:
        raise SplitError("quad too small to corner-split")
    gd = GraphDistance(mesh, p_max)
    t0 = _split_param_on_side(mesh, quad, 0, p_max, gd)
    t1 = _split_param_on_side(mesh, quad, 1, p_max, gd)
    t2 = _split_param_on_side(mesh, quad, 2, p_max, gd)
    t3 = _split_param_on_side(mesh, quad, 3, p_max, gd)
    splits = [quad.params[s].at(t) for s, t in ((0, t0), (1, t1), (2, t2), (3, t3))]
    pos = mesh.point(p_max)
    n = mesh.face_normals[p_max.face]
    dirs = []
    for sp in splits:
        d = mesh.point(sp) - pos
        d -= n * (d @ n)
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            raise SplitError("split point coincides with p_max")
        dirs.append(d / nd)
    # transversality: u-legs (sides 0/2) against v-legs (sides 3/1)
    min_angle = math.inf
    for i in (0, 2):
        for j in (1, 3):
            ang = math.acos(float(np.clip(abs(dirs[i] @ dirs[j]), 0, 1)))
            min_angle = min(min_angle, ang)
    if min_angle < math.radians(20.0):
        raise SplitError("split edges through p_max are nearly tangent")
    c = quad.corners
    s0, s1, s2, s3 = splits
    children = [
        build_geodesic_quad(mesh, [c[0], s0, p_max, s3]),
        build_geodesic_quad(mesh, [s0, c[1], s1, p_max]),
        build_geodesic_quad(mesh, [p_max, s1, c[2], s2]),
        build_geodesic_quad(mesh, [s3, p_max, s2, c[3]]),
    ]
    return children


# -------------------------------------------------------------------------
# Patch network


@dataclass
class PatchNetwork:
    patches: list = field(default_factory=list)
    shared: list = field(default_factory=list)  # ((i, side), (j, side), flip)
    final: bool = False

    def add_patch(self, quad) -> int:
        self.patches.append(quad)
        return len(self.patches) - 1

    def neighbors(self, i):
        out = []
        for (a, sa), (b, sb), flip in self.shared:
            if a == i:
                out.append((sa, b, sb, flip))
            elif b == i:
                out.append((sb, a, sa, flip))
        return out


def detect_shared_boundaries(mesh: TriMesh, network: PatchNetwork,
                             tol: float = None):
    """Rebuild the shared-boundary list by matching side endpoints."""
    if tol is None:
        tol = 1e-6 * mesh.diameter
    from .patchlayout import SIDE_CORNERS
    ends = []
    for i, q in enumerate(network.patches):
        for s, (ca, cb) in enumerate(SIDE_CORNERS):
            ends.append((i, s, mesh.point(q.corners[ca]), mesh.point(q.corners[cb])))
    shared = []
    for a in range(len(ends)):
        i, s, pa, pb = ends[a]
        for b in range(a + 1, len(ends)):
            j, t, qa, qb = ends[b]
            if i == j:
                continue
            if (np.linalg.norm(pa - qa) <= tol and np.linalg.norm(pb - qb) <= tol):
                shared.append(((i, s), (j, t), False))
            elif (np.linalg.norm(pa - qb) <= tol and np.linalg.norm(pb - qa) <= tol):
                shared.append(((i, s), (j, t), True))
    network.shared = shared
    return network


def patch_feasible(mesh: TriMesh, quad: GeodesicQuad, eta_max=ETA_MAX_DEFAULT,
                   k_min=0.2, k_max=5.0, resolution=33):
    """(eta_u, eta_v, slope_ok, layout or None) feasibility summary."""
    rep_u = eta_check(mesh, quad, "u")
    rep_v = eta_check(mesh, quad, "v")
    layout = None
    slope_ok = False
    if rep_u.eta <= eta_max and rep_v.eta <= eta_max:
        try:
            layout = optimize_alpha(mesh, quad, k_min=k_min, k_max=k_max,
                                    resolution=resolution)
            slope_ok = True
        except InfeasibleLayout:
            layout = None
    return rep_u, rep_v, slope_ok, layout


def _slope_violations(mesh, quad, k_min, k_max, resolution=17):
    """Which families cannot meet the slope bounds for any alpha."""
    from .patchlayout import (CladdingFunction, construct_planar_quad,
                              feasible_alpha_interval, intersect_distance_maps,
                              planar_distance_map)
    dmaps = {f: surface_distance_map(mesh, quad, f, resolution)
             for f in ("u", "v")}
    lo, hi = feasible_alpha_interval(quad.side_lengths())
    bad = {"u": True, "v": True}
    for a in np.linspace(lo, hi, 15):
        planar = construct_planar_quad(quad.side_lengths(), a)
        for f in ("u", "v"):
            if not bad[f]:
                continue
            try:
                phi = intersect_distance_maps(dmaps[f], planar_distance_map(planar, f))
            except InfeasibleLayout:
                continue
            if k_min <= phi.slope_min and phi.slope_max <= k_max:
                bad[f] = False
        if not bad["u"] and not bad["v"]:
            break
    return bad


def workflow1(mesh: TriMesh, initial: PatchNetwork, eta_max=ETA_MAX_DEFAULT,
              k_min=0.2, k_max=5.0, max_depth=6) -> PatchNetwork:
    """Algorithm-1 loop: eta-driven splits, then slope-driven splits."""
    work = [(q, 0) for q in initial.patches]
    done = []
    while work:
        quad, depth = work.pop(0)
        rep_u = eta_check(mesh, quad, "u")
        rep_v = eta_check(mesh, quad, "v")
        bad_u = rep_u.eta > eta_max and not rep_u.boundary_peak
        bad_v = rep_v.eta > eta_max and not rep_v.boundary_peak
        if bad_u or bad_v:
            if depth >= max_depth:
                raise SplitError(
                    f"patch not coverable after {max_depth} splits "
                    f"(eta_u={rep_u.eta:.5f}, eta_v={rep_v.eta:.5f})")
            p_max = rep_u.p_max if bad_u else rep_v.p_max
            if bad_u and bad_v:
                children = split_corner_at_peak(mesh, quad, p_max)
            else:
                family = "u" if bad_u else "v"
                children = split_edge_over_peak(mesh, quad, p_max, family)
            work.extend((c, depth + 1) for c in children)
            continue
        done.append((quad, depth, rep_u))
    # slope stage
    final = []
    work = done
    while work:
        quad, depth, rep = work.pop(0)
        bad = _slope_violations(mesh, quad, k_min, k_max)
        if not bad["u"] and not bad["v"]:
            final.append(quad)
            continue
        if depth >= max_depth:
            raise SplitError(
                f"cladding slopes infeasible after {max_depth} splits")
        p_max = rep.p_max
        if bad["u"] and bad["v"]:
            children = split_corner_at_peak(mesh, quad, p_max)
        else:
            family = "u" if bad["u"] else "v"
            children = split_edge_over_peak(mesh, quad, p_max, family)
        work.extend((c, depth + 1, eta_check(mesh, c, "u")) for c in children)
    net = PatchNetwork(final)
    detect_shared_boundaries(mesh, net)
    net.final = True
    return net


# -------------------------------------------------------------------------
# Workflow 2


def _high_k_components(mesh, threshold):
    K = gaussian_curvature(mesh).values
    hot = set(np.where((K > threshold) & ~mesh.boundary_vertices)[0])
    comps = []
    seen = set()
    adj = {v: set() for v in hot}
    for v in hot:
        for fi in mesh.vertex_faces[v]:
            for u in mesh.faces[fi]:
                u = int(u)
                if u in hot and u != v:
                    adj[v].add(u)
    for v in sorted(hot):
        if v in seen:
            continue
        comp = set()
        stack = [v]
        while stack:
            w = stack.pop()
            if w in comp:
                continue
            comp.add(w)
            stack.extend(adj[w] - comp)
        seen |= comp
        comps.append(sorted(comp))
    comps.sort(key=lambda c: (-float(K[c].max()), c[0]))
    return comps


def _quad_from_circle(mesh, center, radius, n_try=4):
    """Corners at quarter arc length of a geodesic circle."""
    poly, closed = geodesic_circle(mesh, center, radius)
    if not closed:
        raise SplitError("circle not closed")
    pos = poly.positions(mesh)
    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    corners = []
    for k in range(4):
        s = (k / 4.0) * total
        i = min(int(np.searchsorted(cum, s, side="right") - 1), len(seg) - 1)
        w = 0.0 if seg[i] <= 0 else (s - cum[i]) / seg[i]
        p = (1 - w) * pos[i] + w * pos[i + 1]
        corners.append(mesh.surface_point_near(p))
    return build_geodesic_quad(mesh, corners)


def _flat_cover_quad(mesh, inset=0.08):
    """Single large quad on a mostly flat mesh, inset from the bounds."""
    V = mesh.vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    span = hi - lo
    axes = np.argsort(span)[::-1][:2]
    a, b = int(axes[0]), int(axes[1])
    pts = []
    for fa, fb in ((inset, inset), (1 - inset, inset),
                   (1 - inset, 1 - inset), (inset, 1 - inset)):
        p = 0.5 * (lo + hi)
        p = p.copy()
        p[a] = lo[a] + fa * span[a]
        p[b] = lo[b] + fb * span[b]
        pts.append(mesh.surface_point_near(p))
    return build_geodesic_quad(mesh, pts)


def workflow2(mesh: TriMesh, params=None, corner_hook=None) -> PatchNetwork:
    """Algorithm-2 style semi-automatic patching with auto-accept hooks.

    corner_hook(proposal: list[SurfacePoint]) -> list[SurfacePoint] lets a
    designer adjust proposed corners; the default accepts them unchanged.
    """
    params = dict(params or {})
    eta_max = params.get("eta_max", ETA_MAX_DEFAULT)
    k_min = params.get("k_min", 0.2)
    k_max = params.get("k_max", 5.0)
    min_size = params.get("min_patch_size", 4.0 * mesh.edge_lengths_mean)
    max_size = params.get("max_patch_size", 0.9 * mesh.diameter)
    if corner_hook is None:
        corner_hook = lambda corners: corners

    K = gaussian_curvature(mesh).values
    k_pos = K[~mesh.boundary_vertices]
    k_top = float(k_pos.max()) if len(k_pos) else 0.0
    if k_top * mesh.diameter ** 2 < 1e-6:
        # numerically flat: no high-K stage
        k_top = 0.0
    threshold = params.get("k_threshold",
                           0.5 * k_top if k_top > 0 else math.inf)
    net = PatchNetwork()
    covered = set()

    if k_top > 0 and math.isfinite(threshold):
        comps = _high_k_components(mesh, threshold)
        for comp in comps:
            if any(v in covered for v in comp):
                continue
            v_peak = int(comp[int(np.argmax(K[comp]))])
            p_max = mesh.vertex_point(v_peak)
            r = math.pi / math.sqrt(float(K[comp].max()))
            radius = min(r, 0.5 * max_size)
            quad = None
            for shrink in (1.0, 0.75, 0.5):
                rr = radius * shrink
                if rr < 0.5 * min_size:
                    break
                try:
                    cand = _quad_from_circle(mesh, p_max, rr)
                except (SplitError, GeodesicError, PatchError):
                    continue
                cand = build_geodesic_quad(mesh, corner_hook(cand.corners))
                ru = eta_check(mesh, cand, "u")
                rv = eta_check(mesh, cand, "v")
                if ru.eta <= eta_max and rv.eta <= eta_max:
                    quad = cand
                    break
            if quad is None:
                # peak too strong or too close to the boundary for a single
                # patch: introduce a corner at the peak instead
                big = None
                for shrink in (1.0, 0.75, 0.5):
                    try:
                        big = _quad_from_circle(mesh, p_max, 2 * radius * shrink)
                        break
                    except (SplitError, GeodesicError, PatchError):
                        continue
                if big is None:
                    raise SplitError(
                        "region around the curvature peak cannot host a patch")
                children = split_corner_at_peak(mesh, big, p_max)
                merged = _try_merge(mesh, children, eta_max)
                for c in merged:
                    net.add_patch(c)
                    covered |= {int(v) for v in
                                interior_vertices(mesh, c)}
                continue
            net.add_patch(quad)
            covered |= {int(v) for v in interior_vertices(mesh, quad)}

    if not net.patches:
        # no high-K stage: one large patch over the designer region
        quad = build_geodesic_quad(mesh, corner_hook(_flat_cover_quad(mesh).corners))
        net.add_patch(quad)

    # slope audit: shrink violating patches toward their centroid
    for idx, quad in enumerate(net.patches):
        for shrink in (1.0, 0.8, 0.6):
            if shrink < 1.0:
                quad = _shrink_quad(mesh, quad, shrink)
            bad = _slope_violations(mesh, quad, k_min, k_max)
            if not bad["u"] and not bad["v"]:
                net.patches[idx] = quad
                break
        else:
            raise SplitError("patch slopes infeasible even at minimum size")

    detect_shared_boundaries(mesh, net)
    net.final = True
    return net


def _shrink_quad(mesh, quad, factor):
    pos = [mesh.point(c) for c in quad.corners]
    ctr = sum(pos) / 4.0
    corners = [mesh.surface_point_near(ctr + factor * (p - ctr)) for p in pos]
    return build_geodesic_quad(mesh, corners)


def _try_merge(mesh, children, eta_max):
    """Merge adjacent corner-split children back when the merged quad is
    still coverable; pairs ordered by combined area ascending."""
    quads = list(children)
    pairs = []
    for i in range(len(quads)):
        for j in range(i + 1, len(quads)):
            shared = _shared_corner_count(mesh, quads[i], quads[j])
            if shared == 2:
                area = region_area(mesh, quads[i]) + region_area(mesh, quads[j])
                pairs.append((area, i, j))
    for _, i, j in sorted(pairs):
        merged = _merge_pair(mesh, quads[i], quads[j])
        if merged is None:
            continue
        ru = eta_check(mesh, merged, "u")
        rv = eta_check(mesh, merged, "v")
        if ru.eta <= eta_max and rv.eta <= eta_max:
            return [merged] + [q for k, q in enumerate(quads) if k not in (i, j)]
    return quads


def _shared_corner_count(mesh, qa, qb, tol=None):
    tol = 1e-6 * mesh.diameter if tol is None else tol
    pa = [mesh.point(c) for c in qa.corners]
    pb = [mesh.point(c) for c in qb.corners]
    n = 0
    for x in pa:
        if any(np.linalg.norm(x - y) <= tol for y in pb):
            n += 1
    return n


def _merge_pair(mesh, qa, qb, tol=None):
    """Quad over the union of two children sharing one side."""
    tol = 1e-6 * mesh.diameter if tol is None else tol
    pa = [mesh.point(c) for c in qa.corners]
    pb = [mesh.point(c) for c in qb.corners]
    outer = []
    for c, x in zip(qa.corners, pa):
        if not any(np.linalg.norm(x - y) <= tol for y in pb):
            outer.append(c)
    for c, x in zip(qb.corners, pb):
        if not any(np.linalg.norm(x - y) <= tol for y in pa):
            outer.append(c)
    if len(outer) != 4:
        return None
    # order CCW around the centroid in the tangent plane
    pos = np.array([mesh.point(c) for c in outer])
    ctr = pos.mean(axis=0)
    n = mesh.face_normals[outer[0].face]
    t1 = pos[0] - ctr
    t1 -= n * (t1 @ n)
    t1 /= max(np.linalg.norm(t1), 1e-12)
    t2 = np.cross(n, t1)
    ang = [math.atan2(float((p - ctr) @ t2), float((p - ctr) @ t1)) for p in pos]
    order = np.argsort(ang)
    try:
        return build_geodesic_quad(mesh, [outer[k] for k in order])
    except PatchError:
        return None
