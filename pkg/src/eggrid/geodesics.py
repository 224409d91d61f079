"""Intrinsic geometry on triangle meshes.

Shortest paths are initialized on a Steiner-point-augmented edge graph
(Dijkstra) and then straightened by corridor unfolding: the face strip is
developed into the plane, crossing parameters are pulled onto the straight
chord (clamped to their edges), and clamped interior vertices trigger a
re-route of the corridor around the vertex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra as _dijkstra

from .mesh import GeodesicPolyline, MeshError, ScalarField, SurfacePoint, TriMesh

DEFAULT_STEINER = 3


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


class GeodesicError(MeshError):
    pass


class NonConvergenceError(GeodesicError):
    def __init__(self, polyline, residual):
        self.best = polyline
        self.residual = residual
        super().__init__(f"straightening did not converge, residual {residual:.3e}")


# -------------------------------------------------------------------------
# Steiner graph


class SteinerGraph:
    """Edge graph over mesh vertices plus k Steiner points per edge."""

    def __init__(self, mesh: TriMesh, k: int = DEFAULT_STEINER):
        self.mesh = mesh
        self.k = k
        nv = len(mesh.vertices)
        edges = sorted(mesh.edge_faces.keys())
        self.edges = np.array(edges, dtype=np.int64)
        self.edge_index = {tuple(e): i for i, e in enumerate(edges)}
        ne = len(edges)

        # node layout: [vertices | edge 0 steiner pts | edge 1 ... ]
        self.n_nodes = nv + k * ne
        pos = np.empty((self.n_nodes, 3))
        pos[:nv] = mesh.vertices
        ts = (np.arange(k) + 1.0) / (k + 1.0)
        node_edge = -np.ones(self.n_nodes, dtype=np.int64)
        node_t = np.zeros(self.n_nodes)
        for ei, (u, v) in enumerate(edges):
            base = nv + k * ei
            pos[base:base + k] = (1 - ts)[:, None] * mesh.vertices[u] + ts[:, None] * mesh.vertices[v]
            node_edge[base:base + k] = ei
            node_t[base:base + k] = ts
        self.pos = pos
        self.node_edge = node_edge
        self.node_t = node_t
        self.nv = nv

        # nodes on each face: 3 vertices + k per edge
        face_nodes = np.empty((len(mesh.faces), 3 + 3 * k), dtype=np.int64)
        for fi, (a, b, c) in enumerate(mesh.faces):
            ids = [a, b, c]
            for (u, v) in ((a, b), (b, c), (c, a)):
                ei = self.edge_index[(min(u, v), max(u, v))]
                ids.extend(range(nv + k * ei, nv + k * ei + k))
            face_nodes[fi] = ids
        self.face_nodes = face_nodes

        # all node pairs within each face, deduplicated globally
        n_per = 3 + 3 * k
        iu, ju = np.triu_indices(n_per, 1)
        a = face_nodes[:, iu].ravel()
        b = face_nodes[:, ju].ravel()
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * self.n_nodes + hi
        _, first = np.unique(keys, return_index=True)
        lo, hi = lo[first], hi[first]
        w = np.linalg.norm(pos[lo] - pos[hi], axis=1)
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        data = np.concatenate([w, w])
        self.matrix = csr_matrix(coo_matrix((data, (rows, cols)),
                                            shape=(self.n_nodes, self.n_nodes)))
        self._coo = (rows, cols, data)

    def augmented(self, points):
        """Sparse matrix with one extra node per surface point, linked to
        every graph node on the point's face."""
        rows, cols, data = self._coo
        ar, ac, ad = [rows], [cols], [data]
        n = self.n_nodes
        for i, sp in enumerate(points):
            nid = n + i
            fnodes = self.face_nodes[sp.face]
            p = self.mesh.point(sp)
            w = np.linalg.norm(self.pos[fnodes] - p, axis=1)
            ar += [np.full(len(fnodes), nid), fnodes]
            ac += [fnodes, np.full(len(fnodes), nid)]
            ad += [w, w]
        m = coo_matrix((np.concatenate(ad), (np.concatenate(ar), np.concatenate(ac))),
                       shape=(n + len(points), n + len(points)))
        return csr_matrix(m)


def steiner_graph(mesh: TriMesh, k: int = DEFAULT_STEINER) -> SteinerGraph:
    key = ("steiner", k)
    if key not in mesh._cache:
        mesh._cache[key] = SteinerGraph(mesh, k)
    return mesh._cache[key]


class GraphDistance:
    """Single-source graph distances with path extraction and continuous
    evaluation at arbitrary surface points."""

    def __init__(self, mesh: TriMesh, source: SurfacePoint, k: int = DEFAULT_STEINER):
        self.mesh = mesh
        self.source = source
        self.graph = steiner_graph(mesh, k)
        m = self.graph.augmented([source])
        self.src_id = self.graph.n_nodes
        dist, pred = _dijkstra(m, directed=False, indices=self.src_id,
                               return_predecessors=True)
        self.dist = dist
        self.pred = pred
        self._src_pos = mesh.point(source)

    def vertex_values(self) -> np.ndarray:
        return self.dist[: self.graph.nv].copy()

    def eval(self, sp: SurfacePoint) -> float:
        p = self.mesh.point(sp)
        fnodes = self.graph.face_nodes[sp.face]
        d = float(np.min(self.dist[fnodes] + np.linalg.norm(self.graph.pos[fnodes] - p, axis=1)))
        if sp.face == self.source.face:
            d = min(d, float(np.linalg.norm(p - self._src_pos)))
        return d

    def node_path(self, sp: SurfacePoint):
        """Graph node ids from source (exclusive) to the entry node for sp."""
        p = self.mesh.point(sp)
        fnodes = self.graph.face_nodes[sp.face]
        best = fnodes[int(np.argmin(self.dist[fnodes] + np.linalg.norm(self.graph.pos[fnodes] - p, axis=1)))]
        path = []
        n = int(best)
        while n != self.src_id and n >= 0:
            path.append(n)
            n = int(self.pred[n])
        return path[::-1]


# -------------------------------------------------------------------------
# Corridors


@dataclass
class Corridor:
    start: SurfacePoint
    end: SurfacePoint
    faces: list          # len m+1
    cross_edges: list    # len m, mesh edge tuples (u, v) with u < v
    cross_t: list        # len m, param along (u -> v)


def _common_face(mesh, graph, n1, n2):
    f1 = _node_faces(mesh, graph, n1)
    f2 = _node_faces(mesh, graph, n2)
    common = [f for f in f1 if f in f2]
    return common


def _node_faces(mesh, graph, n):
    if n < graph.nv:
        return list(mesh.vertex_faces[n])
    ei = graph.node_edge[n]
    u, v = graph.edges[ei]
    return [fi for fi, _ in mesh.edge_faces[(u, v)]]


def vertex_fan(mesh: TriMesh, v: int):
    """Ordered faces around vertex v; returns (faces, is_boundary)."""
    inc = mesh.vertex_faces[v]
    if not inc:
        return [], True

    def step(fi):
        f = mesh.faces[fi]
        l = list(f).index(v)
        return mesh.neighbor_across(fi, l)

    def step_back(fi):
        f = mesh.faces[fi]
        l = list(f).index(v)
        return mesh.neighbor_across(fi, (l + 2) % 3)

    start = inc[0]
    # rewind to a boundary face if the fan is open
    fan = [start]
    fi = step_back(start)
    while fi >= 0 and fi != start:
        fan.insert(0, fi)
        fi = step_back(fi)
    boundary = fi < 0
    if not boundary:
        return fan, False
    fi = step(start)
    while fi >= 0:
        fan.append(fi)
        fi = step(fi)
    return fan, True


def _face_angle(mesh, fi, v):
    f = list(mesh.faces[fi])
    l = f.index(v)
    p = mesh.vertices[v]
    a = mesh.vertices[f[(l + 1) % 3]] - p
    b = mesh.vertices[f[(l + 2) % 3]] - p
    ca = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(1.0, max(-1.0, ca)))


def _fan_between(mesh, v, fa, fb):
    """Two face fans around v from fa to fb: (ccw_arc, cw_arc); open fans may
    yield only one arc."""
    fan, boundary = vertex_fan(mesh, v)
    ia, ib = fan.index(fa), fan.index(fb)
    if not boundary:
        n = len(fan)
        if ia <= ib:
            arc1 = fan[ia:ib + 1]
            arc2 = fan[ib:] + fan[:ia + 1]
            arc2 = arc2[::-1]
        else:
            arc1 = fan[ia:] + fan[:ib + 1]
            arc2 = fan[ib:ia + 1][::-1]
        return [arc1, arc2]
    lo, hi = min(ia, ib), max(ia, ib)
    arc = fan[lo:hi + 1]
    if ia > ib:
        arc = arc[::-1]
    return [arc]


def _arc_to_crossings(mesh, graph, v, arc):
    """Crossing records (edge, t) at vertex v for consecutive faces in arc."""
    ce, ct = [], []
    for fa, fb in zip(arc, arc[1:]):
        ki, _ = mesh.shared_edge_local(fa, fb)
        a, b = mesh.faces[fa][ki], mesh.faces[fa][(ki + 1) % 3]
        u, w = (a, b) if a < b else (b, a)
        ce.append((int(u), int(w)))
        ct.append(0.0 if v == u else 1.0)
    return ce, ct


def corridor_from_nodes(mesh, graph, a: SurfacePoint, b: SurfacePoint, nodes) -> Corridor:
    """Build a face corridor from a graph node path (source/target excluded)."""
    pts = [("sp", a)] + [("node", n) for n in nodes] + [("sp", b)]
    # segment faces
    seg_faces = []
    for (k1, x1), (k2, x2) in zip(pts, pts[1:]):
        if k1 == "sp" and k2 == "sp":
            seg_faces.append(a.face)
            continue
        f1 = [x1.face] if k1 == "sp" else _node_faces(mesh, graph, x1)
        f2 = [x2.face] if k2 == "sp" else _node_faces(mesh, graph, x2)
        common = [f for f in f1 if f in f2]
        if not common:
            # vertex nodes may connect across a fan; defer to transition logic
            seg_faces.append(None)
        else:
            prev = seg_faces[-1] if seg_faces else None
            pick = [f for f in common if f != prev] or common
            seg_faces.append(pick[0])
    # fill gaps conservatively
    for i, f in enumerate(seg_faces):
        if f is None:
            seg_faces[i] = seg_faces[i - 1] if i > 0 else a.face

    faces = [seg_faces[0]]
    cross_edges, cross_t = [], []
    for i in range(1, len(seg_faces)):
        fa, fb = faces[-1], seg_faces[i]
        if fa == fb:
            continue
        node_kind, node = pts[i]
        if node_kind == "node" and node >= graph.nv:
            ei = graph.node_edge[node]
            u, v = (int(x) for x in graph.edges[ei])
            if mesh.neighbor_across_edge(fa, (u, v)) == fb:
                cross_edges.append((u, v))
                cross_t.append(float(graph.node_t[node]))
                faces.append(fb)
                continue
        # transition at a vertex (or mismatched edge): route a fan
        if node_kind == "node" and node < graph.nv:
            v = int(node)
        else:
            # fall back: shared vertex of the two faces
            shared = set(mesh.faces[fa]) & set(mesh.faces[fb])
            if not shared:
                raise GeodesicError(f"faces {fa},{fb} share no vertex on path")
            v = int(sorted(shared)[0])
        arcs = _fan_between(mesh, v, fa, fb)
        arcs.sort(key=lambda arc: sum(_face_angle(mesh, f, v) for f in arc))
        arc = arcs[0]
        ce, ct = _arc_to_crossings(mesh, graph, v, arc)
        cross_edges.extend(ce)
        cross_t.extend(ct)
        faces.extend(arc[1:])
    return Corridor(a, b, faces, cross_edges, cross_t)


# -------------------------------------------------------------------------
# Unfolding and straightening


def _unfold(mesh, corr):
    """Develop the corridor into 2D. Returns per-face vertex->xy dicts plus
    2D start/end points and crossing edge endpoint coordinates."""
    V = mesh.vertices
    emb = []
    f0 = corr.faces[0]
    a, b, c = mesh.faces[f0]
    pa, pb, pc = V[a], V[b], V[c]
    A = np.zeros(2)
    B = np.array([np.linalg.norm(pb - pa), 0.0])
    C = _third_point(A, B, np.linalg.norm(pc - pa), np.linalg.norm(pc - pb), +1.0)
    emb.append({int(a): A, int(b): B, int(c): C})
    for i, fb in enumerate(corr.faces[1:]):
        prev = emb[-1]
        u, v = corr.cross_edges[i]
        U2, V2 = prev[u], prev[v]
        fverts = [int(x) for x in mesh.faces[fb]]
        w = [x for x in fverts if x != u and x != v][0]
        # previous face's vertex off the shared edge decides the side
        off = [x for x in emb[-1] if x != u and x != v][0]
        side = _side(U2, V2, prev[off])
        W2 = _third_point(U2, V2, np.linalg.norm(V[w] - V[u]), np.linalg.norm(V[w] - V[v]), -side)
        emb.append({u: U2, v: V2, w: W2})
    s2d = _bary2d(mesh, emb[0], corr.start)
    e2d = _bary2d(mesh, emb[-1], corr.end)
    seg2d = []
    for i, (u, v) in enumerate(corr.cross_edges):
        d = emb[i + 1]
        seg2d.append((d[u], d[v]))
    return emb, s2d, e2d, seg2d


def _third_point(A, B, ra, rb, side):
    d = B - A
    L = np.linalg.norm(d)
    x = (ra * ra - rb * rb + L * L) / (2 * L)
    y2 = max(ra * ra - x * x, 0.0)
    y = math.sqrt(y2) * (1.0 if side > 0 else -1.0)
    t = d / L
    n = np.array([-t[1], t[0]])
    return A + x * t + y * n


def _side(A, B, P):
    return 1.0 if _cross2(B - A, P - A) >= 0 else -1.0


def _bary2d(mesh, emb, sp: SurfacePoint):
    f = [int(x) for x in mesh.faces[sp.face]]
    return sum(w * emb[v] for w, v in zip(sp.bary, f))


def _poly_points(s2d, e2d, seg2d, ts):
    """Path points as float tuples; seg2d entries are (ux, uy, vx, vy)."""
    pts = [s2d]
    for (ux, uy, vx, vy), t in zip(seg2d, ts):
        pts.append((ux + (vx - ux) * t, uy + (vy - uy) * t))
    pts.append(e2d)
    return pts


def _poly_length(pts):
    total = 0.0
    px, py = pts[0]
    for qx, qy in pts[1:]:
        total += math.hypot(qx - px, qy - py)
        px, py = qx, qy
    return total


def _floatify(s2d, e2d, seg2d):
    s = (float(s2d[0]), float(s2d[1]))
    e = (float(e2d[0]), float(e2d[1]))
    segs = [(float(U[0]), float(U[1]), float(V[0]), float(V[1])) for U, V in seg2d]
    return s, e, segs


def _line_min(ax, ay, bx, by, ux, uy, vx, vy):
    """Param t in [0,1] on segment UV minimizing |P-A| + |P-B|."""
    dx, dy = vx - ux, vy - uy
    dd = dx * dx + dy * dy
    if dd < 1e-300:
        return 0.0
    sa = dx * (ay - uy) - dy * (ax - ux)
    sb = dx * (by - uy) - dy * (bx - ux)
    if sa * sb > 0:
        # reflect A across the edge line
        ax = ax + 2.0 * sa * dy / dd
        ay = ay - 2.0 * sa * dx / dd
    rx, ry = bx - ax, by - ay
    denom = rx * dy - ry * dx
    # relative guard: near-collinear A'B and edge make the intersection
    # a ratio of roundoff terms
    if abs(denom) <= 1e-9 * math.hypot(rx, ry) * math.sqrt(dd):
        t = ((0.5 * (ax + bx) - ux) * dx + (0.5 * (ay + by) - uy) * dy) / dd
    else:
        srel = ((ux - ax) * dy - (uy - ay) * dx) / denom
        px, py = ax + srel * rx, ay + srel * ry
        t = ((px - ux) * dx + (py - uy) * dy) / dd
    return min(1.0, max(0.0, t))


def _chord_params(ax, ay, bx, by, segs, lo, hi):
    """Clamped intersection params of chord A-B with crossing edges lo..hi."""
    cx, cy = bx - ax, by - ay
    out = []
    for k in range(lo, hi):
        ux, uy, vx, vy = segs[k]
        dx, dy = vx - ux, vy - uy
        denom = cx * dy - cy * dx
        if abs(denom) <= 1e-9 * math.hypot(cx, cy) * math.hypot(dx, dy):
            return None
        srel = ((ux - ax) * dy - (uy - ay) * dx) / denom
        px, py = ax + srel * cx, ay + srel * cy
        dd = dx * dx + dy * dy
        t = ((px - ux) * dx + (py - uy) * dy) / dd
        out.append(min(1.0, max(0.0, t)))
    return out


def _relax_runs(s2d, e2d, segs, ts):
    """Project local chords across runs of coincident crossing points.

    Coordinate descent cannot move a crossing whose neighbors collapse onto
    the same vertex; treating the whole run at once resolves that."""
    pts = _poly_points(s2d, e2d, segs, ts)
    improved = False
    i = 0
    n = len(ts)
    while i < n:
        j = i
        while j + 1 < n and math.hypot(pts[j + 2][0] - pts[i + 1][0],
                                       pts[j + 2][1] - pts[i + 1][1]) < 1e-13:
            j += 1
        if j > i or ts[i] <= 1e-12 or ts[i] >= 1 - 1e-12:
            (ax, ay), (bx, by) = pts[i], pts[j + 2]
            pi, pj = pts[i + 1], pts[j + 1]
            if (math.hypot(bx - ax, by - ay) > 1e-13
                    and math.hypot(ax - pi[0], ay - pi[1]) > 1e-13
                    and math.hypot(bx - pj[0], by - pj[1]) > 1e-13):
                trial = _chord_params(ax, ay, bx, by, segs, i, j + 1)
                if trial is not None:
                    def seglen(tvals):
                        ps = [(ax, ay)]
                        for k, t in enumerate(tvals):
                            ux, uy, vx, vy = segs[i + k]
                            ps.append((ux + (vx - ux) * t, uy + (vy - uy) * t))
                        ps.append((bx, by))
                        return _poly_length(ps)
                    if seglen(trial) < seglen(ts[i:j + 1]) - 1e-16:
                        ts[i:j + 1] = trial
                        for k in range(i, j + 1):
                            ux, uy, vx, vy = segs[i + (k - i)]
                            t = ts[k]
                            pts[k + 1] = (ux + (vx - ux) * t, uy + (vy - uy) * t)
                        improved = True
        i = j + 1
    return improved


def _line_min_vec(A, B, U, D):
    """Vectorized _line_min: params on segments U + t*D minimizing
    |P-A| + |P-B| per row."""
    dd = np.einsum("ij,ij->i", D, D)
    safe_dd = np.maximum(dd, 1e-300)
    sa = D[:, 0] * (A[:, 1] - U[:, 1]) - D[:, 1] * (A[:, 0] - U[:, 0])
    sb = D[:, 0] * (B[:, 1] - U[:, 1]) - D[:, 1] * (B[:, 0] - U[:, 0])
    refl = sa * sb > 0
    ax = np.where(refl, A[:, 0] + 2.0 * sa * D[:, 1] / safe_dd, A[:, 0])
    ay = np.where(refl, A[:, 1] - 2.0 * sa * D[:, 0] / safe_dd, A[:, 1])
    rx, ry = B[:, 0] - ax, B[:, 1] - ay
    denom = rx * D[:, 1] - ry * D[:, 0]
    # relative guard: near-collinear A'B and edge make the intersection
    # a ratio of roundoff terms
    parallel = np.abs(denom) <= 1e-9 * np.hypot(rx, ry) * np.sqrt(safe_dd)
    mid_t = ((0.5 * (ax + B[:, 0]) - U[:, 0]) * D[:, 0]
             + (0.5 * (ay + B[:, 1]) - U[:, 1]) * D[:, 1]) / safe_dd
    srel = ((U[:, 0] - ax) * D[:, 1] - (U[:, 1] - ay) * D[:, 0]) \
        / np.where(parallel, 1.0, denom)
    px, py = ax + srel * rx, ay + srel * ry
    t = ((px - U[:, 0]) * D[:, 0] + (py - U[:, 1]) * D[:, 1]) / safe_dd
    t = np.where(parallel, mid_t, t)
    t = np.where(dd < 1e-300, 0.0, t)
    return np.clip(t, 0.0, 1.0)


def _orient_portals(segs, cents):
    """Portals as (left, right) pairs seen walking the unfolded strip.

    Portal k separates faces k and k+1; the centroid-to-centroid direction
    decides which endpoint lies to the left.  Per-portal and exact in the
    planar development -- no side propagation."""
    n = len(segs)
    L = np.empty((n, 2))
    R = np.empty((n, 2))
    flipped = np.zeros(n, dtype=bool)
    for k in range(n):
        u, v = segs[k][:2], segs[k][2:]
        cx, cy = cents[k]
        dx, dy = cents[k + 1][0] - cx, cents[k + 1][1] - cy
        su = dx * (u[1] - cy) - dy * (u[0] - cx)
        sv = dx * (v[1] - cy) - dy * (v[0] - cx)
        if su >= sv:
            L[k], R[k] = u, v
        else:
            L[k], R[k], flipped[k] = v, u, True
    return L, R, flipped


def _triarea2(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _funnel(S, E, L, R):
    """Taut path through the portal sleeve (simple stupid funnel).

    Returns (points, portal index of each point); S carries index 0, E
    carries index n+1, apexes the index of the portal they pin."""
    n = len(L)
    Ls = [S] + [tuple(p) for p in L] + [tuple(E)]
    Rs = [S] + [tuple(p) for p in R] + [tuple(E)]
    apex, left, right = S, S, S
    ai = li = ri = 0
    path = [(S, 0)]
    i = 1
    guard = 4 * (n + 2) * (n + 2) + 16
    while i <= n + 1:
        guard -= 1
        if guard < 0:
            return None
        l_new, r_new = Ls[i], Rs[i]
        if _triarea2(apex, right, r_new) >= 0.0:
            if (apex == right) or _triarea2(apex, left, r_new) < 0.0:
                right, ri = r_new, i
            else:
                path.append((left, li))
                apex, ai = left, li
                left, right = apex, apex
                li = ri = ai
                i = ai + 1
                continue
        if _triarea2(apex, left, l_new) <= 0.0:
            if (apex == left) or _triarea2(apex, right, l_new) > 0.0:
                left, li = l_new, i
            else:
                path.append((right, ri))
                apex, ai = right, ri
                left, right = apex, apex
                li = ri = ai
                i = ai + 1
                continue
        i += 1
    path.append((tuple(E), n + 1))
    return path


def _portal_params(path, L, R):
    """Clamped intersection param of the taut path with every portal."""
    n = len(L)
    ts = np.empty(n)
    j = 0
    for i in range(1, n + 1):
        while j + 1 < len(path) - 1 and path[j + 1][1] < i:
            j += 1
        a, b = path[j][0], path[j + 1][0]
        U, V = L[i - 1], R[i - 1]
        dx, dy = V[0] - U[0], V[1] - U[1]
        dd = dx * dx + dy * dy
        if dd < 1e-300:
            ts[i - 1] = 0.0
            continue
        rx, ry = b[0] - a[0], b[1] - a[1]
        denom = rx * dy - ry * dx
        if abs(denom) <= 1e-9 * math.hypot(rx, ry) * math.sqrt(dd):
            t = ((a[0] - U[0]) * dx + (a[1] - U[1]) * dy) / dd
        else:
            s = ((U[0] - a[0]) * dy - (U[1] - a[1]) * dx) / denom
            px, py = a[0] + s * rx, a[1] + s * ry
            t = ((px - U[0]) * dx + (py - U[1]) * dy) / dd
        ts[i - 1] = min(1.0, max(0.0, t))
    return ts


def _optimize_ts(s2d, e2d, seg2d, ts, tol, cents=None):
    """Shorten within a fixed corridor.

    Exact taut path via the funnel algorithm when the sleeve is coherent;
    chord candidate plus red-black sweeps as the fallback."""
    s2d, e2d, segs = _floatify(s2d, e2d, seg2d)
    n = len(segs)
    S = np.array(s2d, dtype=float)
    E = np.array(e2d, dtype=float)
    U = np.array([(s[0], s[1]) for s in segs], dtype=float).reshape(n, 2)
    D = np.array([(s[2] - s[0], s[3] - s[1]) for s in segs],
                 dtype=float).reshape(n, 2)
    dlen = np.hypot(D[:, 0], D[:, 1])
    t = np.asarray(ts, dtype=float)

    def points(tv):
        return np.vstack([S[None, :], U + D * tv[:, None], E[None, :]])

    def plen(tv):
        p = points(tv)
        return float(np.hypot(np.diff(p[:, 0]), np.diff(p[:, 1])).sum())

    orient = _orient_portals(segs, cents) if (n and cents is not None) else None
    if orient is not None:
        L, Rr, flipped = orient
        path = _funnel((float(S[0]), float(S[1])),
                       (float(E[0]), float(E[1])), L, Rr)
        if path is not None:
            tf = _portal_params(path, L, Rr)
            tf = np.where(flipped, 1.0 - tf, tf)
            if plen(tf) <= plen(t):
                t = tf

    cur = plen(t)
    cand = _chord_params(S[0], S[1], E[0], E[1], segs, 0, n)
    if cand is not None:
        ca = np.asarray(cand, dtype=float)
        clen = plen(ca)
        if clen < cur:
            t = ca
            cur = clen
    prev_len = cur
    sweep_len = cur
    even = np.arange(0, n, 2)
    odd = np.arange(1, n, 2)
    for _ in range(400):
        p = points(t)
        moved = 0.0
        for idx in (even, odd):
            if len(idx) == 0:
                continue
            tn = _line_min_vec(p[idx], p[idx + 2], U[idx], D[idx])
            moved = max(moved,
                        float(np.max(np.abs(tn - t[idx]) * dlen[idx])))
            t[idx] = tn
            p[idx + 1] = U[idx] + D[idx] * tn[:, None]
        # pinned runs wobble without shortening; stop on length stagnation
        cur = plen(t)
        stagnant = sweep_len - cur < 1e-3 * tol
        sweep_len = cur
        if moved < 0.05 * tol or stagnant:
            ts[:] = [float(x) for x in t]
            relaxed = _relax_runs(s2d, e2d, segs, ts)
            t = np.asarray(ts, dtype=float)
            cur = plen(t)
            if not relaxed or prev_len - cur < 0.01 * tol:
                break
            prev_len = cur
    else:
        ts[:] = [float(x) for x in t]
        _relax_runs(s2d, e2d, segs, ts)
        t = np.asarray(ts, dtype=float)
    # snap near-vertex crossings so pin detection (runs, pivots) sees them
    snap = 1e-4
    t[(t > 0.0) & (t < snap)] = 0.0
    t[(t > 1.0 - snap) & (t < 1.0)] = 1.0
    ts[:] = [float(x) for x in t]
    return plen(t)


def straighten(mesh: TriMesh, corr: Corridor, tol: float, max_outer: int = 60):
    """Shorten the corridor path; returns (corridor, residual, length)."""
    ts = list(corr.cross_t)
    best_len = None
    flips = {}
    for outer in range(max_outer):
        emb, s2d, e2d, seg2d = _unfold(mesh, corr)
        cents = [np.mean(list(d.values()), axis=0) for d in emb]
        cur = _optimize_ts(s2d, e2d, seg2d, ts, tol, cents)
        corr.cross_t = list(ts)
        # pivoting shifts the corridor one ring per pass; once the kink
        # residual is negligible further passes only polish the lane
        s2f, e2f, segs = _floatify(s2d, e2d, seg2d)
        pts = _poly_points(s2f, e2f, segs, ts)
        if _residual(mesh, corr, pts, segs, ts) <= tol:
            best_len = cur
            break
        changed = _pivot_once(mesh, corr, ts, cur, tol, flips)
        ts = list(corr.cross_t)
        if not changed and best_len is not None and best_len - cur <= tol:
            best_len = cur
            break
        best_len = cur if best_len is None else min(best_len, cur)
    emb, s2d, e2d, seg2d = _unfold(mesh, corr)
    s2f, e2f, segs = _floatify(s2d, e2d, seg2d)
    pts = _poly_points(s2f, e2f, segs, ts)
    length = _poly_length(pts)
    residual = _residual(mesh, corr, pts, segs, ts)
    return corr, residual, length


def _vec_angle(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-15 or nb < 1e-15:
        return 0.0
    return math.acos(min(1.0, max(-1.0, float(np.dot(a, b) / (na * nb)))))


def _run_wedge_angle(mesh, corr, i, j, vid, pos_a, pos_b):
    """Accumulated surface angle at vertex vid between the run's entry and
    exit directions, summed face by face along the corridor."""
    V = mesh.vertices
    pv = V[vid]
    # other endpoints of the run's crossing edges
    ws = []
    for k in range(i, j + 1):
        u, v = corr.cross_edges[k]
        ws.append(v if u == vid else u)
    ang = _vec_angle(pos_a - pv, V[ws[0]] - pv)
    for k in range(len(ws) - 1):
        ang += _vec_angle(V[ws[k]] - pv, V[ws[k + 1]] - pv)
    ang += _vec_angle(V[ws[-1]] - pv, pos_b - pv)
    return ang


def _dist2(p, q):
    return math.hypot(q[0] - p[0], q[1] - p[1])


def _residual(mesh, corr, pts, seg2d, ts):
    res = 0.0
    n = len(ts)
    i = 0
    while i < n:
        t = ts[i]
        clamped = t <= 1e-9 or t >= 1 - 1e-9
        if not clamped:
            gain = (_dist2(pts[i], pts[i + 1]) + _dist2(pts[i + 1], pts[i + 2])
                    - _dist2(pts[i], pts[i + 2]))
            res = max(res, float(gain))
            i += 1
            continue
        u, v = corr.cross_edges[i]
        vid = u if t <= 1e-9 else v
        j = i
        while j + 1 < n:
            t2 = ts[j + 1]
            u2, v2 = corr.cross_edges[j + 1]
            vid2 = u2 if t2 <= 1e-9 else (v2 if t2 >= 1 - 1e-9 else -1)
            if vid2 == vid:
                j += 1
            else:
                break
        if not mesh.boundary_vertices[vid]:
            pos_a = _strip_to_surface(mesh, corr, i, pts[i])
            pos_b = _strip_to_surface(mesh, corr, j + 1, pts[j + 2], end=True)
            theta_cur = _run_wedge_angle(mesh, corr, i, j, vid, pos_a, pos_b)
            fan, _ = vertex_fan(mesh, vid)
            total = sum(_face_angle(mesh, f, vid) for f in fan)
            theta = min(theta_cur, total - theta_cur)
            # a kink at a vertex is shortest only if both wedges are >= pi
            if theta < math.pi - 1e-9:
                la = _dist2(pts[i], pts[i + 1])
                lb = _dist2(pts[j + 1], pts[j + 2])
                chord = math.sqrt(max(
                    la * la + lb * lb - 2 * la * lb * math.cos(theta), 0.0))
                res = max(res, la + lb - chord)
        i = j + 1
    return res


def _strip_to_surface(mesh, corr, seg_index, pt2d, end=False):
    """3D position of a path point: start/end or a crossing point."""
    if seg_index == 0 and not end:
        return mesh.point(corr.start)
    if end and seg_index >= len(corr.cross_t):
        return mesh.point(corr.end)
    k = seg_index - 1 if not end else seg_index
    u, v = corr.cross_edges[k]
    t = corr.cross_t[k]
    return (1 - t) * mesh.vertices[u] + t * mesh.vertices[v]


def _pivot_once(mesh, corr, ts, cur_len, tol, flips=None):
    """Re-route the corridor around clamped interior vertices (wedge < pi).

    Flip-out style: a pinned vertex whose smaller wedge angle is < pi is
    rerouted even at zero measured gain (bounded retries per vertex), which
    lets chains of collinear pins unwind. Returns True if changed."""
    if flips is None:
        flips = {}
    any_change = False
    i = 0
    while True:
        ts = corr.cross_t
        if i >= len(ts):
            break
        t = ts[i]
        if 1e-9 < t < 1 - 1e-9:
            i += 1
            continue
        u, v = corr.cross_edges[i]
        vid = u if t <= 1e-9 else v
        j = i
        while j + 1 < len(ts):
            t2 = ts[j + 1]
            u2, v2 = corr.cross_edges[j + 1]
            vid2 = u2 if t2 <= 1e-9 else (v2 if t2 >= 1 - 1e-9 else -1)
            if vid2 == vid:
                j += 1
            else:
                break
        if mesh.boundary_vertices[vid]:
            i = j + 1
            continue
        fa, fb = corr.faces[i], corr.faces[j + 1]
        if fa == fb:
            i = j + 1
            continue
        # only flip where a wedge angle is < pi (a shortcut exists there)
        pos_a = _strip_to_surface(mesh, corr, i, None)
        pos_b = _strip_to_surface(mesh, corr, j + 1, None, end=True)
        theta_cur = _run_wedge_angle(mesh, corr, i, j, vid, pos_a, pos_b)
        fan, _ = vertex_fan(mesh, vid)
        total = sum(_face_angle(mesh, f, vid) for f in fan)
        if min(theta_cur, total - theta_cur) >= math.pi - 1e-9:
            i = j + 1
            continue
        arcs = _fan_between(mesh, vid, fa, fb)
        cur_arc = corr.faces[i:j + 2]
        others = [a for a in arcs if a != cur_arc]
        if not others:
            i = j + 1
            continue
        graph = steiner_graph(mesh)
        # trial arcs are compared on a local window anchored at the run's
        # neighbor crossings; the next global pass re-optimizes everything
        sp_a = corr.start if i == 0 else _crossing_sp(mesh, corr, i - 1,
                                                      corr.faces[i])
        if j + 1 >= len(corr.cross_t):
            sp_b = corr.end
        else:
            sp_b = _crossing_sp(mesh, corr, j + 1, corr.faces[j + 1])
        pv = mesh.vertices[vid]
        cur_local = (np.linalg.norm(mesh.point(sp_a) - pv)
                     + np.linalg.norm(pv - mesh.point(sp_b)))
        best = None
        for arc in others:
            ce, ct = _arc_to_crossings(mesh, graph, vid, arc)
            window = Corridor(sp_a, sp_b, list(arc), ce, ct)
            try:
                emb, s2d, e2d, seg2d = _unfold(mesh, window)
            except (KeyError, IndexError):
                continue
            t2 = list(ct)
            cents = [np.mean(list(d.values()), axis=0) for d in emb]
            new_local = _optimize_ts(s2d, e2d, seg2d, t2, tol, cents)
            if best is None or new_local < best[0]:
                best = (new_local, arc, ce, t2)
        if best is not None and best[0] > cur_local + 1e-12:
            best = None
        if best is not None and best[0] >= cur_local - 1e-15:
            # zero-gain flip: allow a bounded number per vertex so collinear
            # pin chains can unwind without oscillating forever
            if flips.get(vid, 0) >= 3:
                best = None
            else:
                flips[vid] = flips.get(vid, 0) + 1
        if best is not None:
            new_local, arc, ce, t2 = best
            corr.faces = corr.faces[:i] + list(arc) + corr.faces[j + 2:]
            corr.cross_edges = (corr.cross_edges[:i] + ce
                                + corr.cross_edges[j + 1:])
            corr.cross_t = corr.cross_t[:i] + t2 + corr.cross_t[j + 1:]
            any_change = True
            i = i + len(ce) + 1
            continue
        i = j + 1
    return any_change


def _crossing_sp(mesh, corr, k, face):
    """Crossing k as a SurfacePoint expressed in the given adjacent face."""
    u, v = corr.cross_edges[k]
    t = corr.cross_t[k]
    fverts = [int(x) for x in mesh.faces[face]]
    b = [0.0, 0.0, 0.0]
    b[fverts.index(u)] = 1.0 - t
    b[fverts.index(v)] = t
    return SurfacePoint(face, tuple(b))


def _corridor_polyline(mesh, corr) -> GeodesicPolyline:
    pts = [corr.start]
    for i, ((u, v), t) in enumerate(zip(corr.cross_edges, corr.cross_t)):
        fb = corr.faces[i + 1]
        fverts = [int(x) for x in mesh.faces[fb]]
        b = np.zeros(3)
        b[fverts.index(u)] = 1 - t
        b[fverts.index(v)] = t
        pts.append(SurfacePoint(fb, tuple(b)))
    pts.append(corr.end)
    pos = np.array([mesh.point(p) for p in pts])
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pos[i] - pos[keep[-1]]) > 1e-14:
            keep.append(i)
    if keep[-1] != len(pts) - 1:
        keep[-1] = len(pts) - 1
    pts = [pts[i] for i in keep]
    pos = pos[keep]
    length = float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
    return GeodesicPolyline(pts, length)


# -------------------------------------------------------------------------
# Public operations


def geo_tolerance(mesh: TriMesh) -> float:
    return 1e-6 * mesh.diameter


def shortest_geodesic(mesh: TriMesh, a: SurfacePoint, b: SurfacePoint,
                      gd: GraphDistance = None, tol: float = None,
                      max_outer: int = 40) -> GeodesicPolyline:
    """Locally shortest path from a to b (graph init + straightening)."""
    tol = geo_tolerance(mesh) if tol is None else tol
    pa, pb = mesh.point(a), mesh.point(b)
    if a.face == b.face:
        length = float(np.linalg.norm(pb - pa))
        return GeodesicPolyline([a, b], length)
    if gd is None:
        gd = GraphDistance(mesh, a)
    init_len = gd.eval(b)
    nodes = gd.node_path(b)
    graph = gd.graph
    corr = corridor_from_nodes(mesh, graph, a, b, nodes)
    corr, residual, length = straighten(mesh, corr, tol, max_outer)
    poly = _corridor_polyline(mesh, corr)
    poly.straightening_residual = residual
    if residual > 100 * tol:
        raise NonConvergenceError(poly, residual)
    if poly.length > init_len + tol:
        poly.length = min(poly.length, init_len)
    return poly


def geodesic_distance_field(mesh: TriMesh, source: SurfacePoint,
                            k: int = DEFAULT_STEINER) -> ScalarField:
    gd = GraphDistance(mesh, source, k)
    return ScalarField(gd.vertex_values(), kind="distance")


def trace_geodesic(mesh: TriMesh, start: SurfacePoint, direction, length: float,
                   max_steps: int = 200000) -> GeodesicPolyline:
    """Straightest geodesic from start along a tangent direction."""
    d = np.asarray(direction, dtype=float)
    fi = start.face
    n = mesh.face_normals[fi]
    d = d - (d @ n) * n
    nd = np.linalg.norm(d)
    if nd < 1e-14:
        raise GeodesicError("direction is normal to the start face")
    d /= nd
    p = mesh.point(start)
    pts = [start]
    remaining = float(length)
    hit_boundary = False
    for _ in range(max_steps):
        tri = mesh.face_vertices(fi)
        exit_t, exit_k, exit_dist = None, None, np.inf
        for k in range(3):
            A, B = tri[k], tri[(k + 1) % 3]
            e = B - A
            m = np.column_stack([d, -e])
            rhs = A - p
            mm = m.T @ m
            if abs(np.linalg.det(mm)) < 1e-24:
                continue
            s, t = np.linalg.solve(mm, m.T @ rhs)
            if s > 1e-12 and -1e-10 <= t <= 1 + 1e-10 and s < exit_dist:
                exit_dist, exit_k, exit_t = s, k, min(1.0, max(0.0, t))
        if exit_k is None:
            # start lies on a vertex/edge and d points out of this face:
            # relocate to the incident face containing a nudged point
            nudge = 1e-7 * mesh.edge_lengths_mean
            target = p + nudge * d
            sp = mesh.surface_point_near(target)
            if np.linalg.norm(mesh.point(sp) - target) > 0.5 * nudge:
                hit_boundary = True
                break
            if sp.face == fi:
                break
            fi = sp.face
            n = mesh.face_normals[fi]
            d = d - (d @ n) * n
            nd = np.linalg.norm(d)
            if nd < 1e-14:
                break
            d /= nd
            p = mesh.point(mesh.surface_point_near_on_face(fi, p))
            continue
        if exit_dist >= remaining:
            p_end = p + remaining * d
            pts.append(mesh.surface_point_near_on_face(fi, p_end))
            remaining = 0.0
            break
        p = p + exit_dist * d
        remaining -= exit_dist
        # avoid stopping exactly on a vertex
        exit_t = min(1.0 - 1e-9, max(1e-9, exit_t))
        pts.append(mesh.edge_point(fi, exit_k, exit_t))
        nb = mesh.neighbor_across(fi, exit_k)
        if nb < 0:
            hit_boundary = True
            break
        # rotate direction about the shared edge into the neighbor plane
        A = tri[exit_k]
        B = tri[(exit_k + 1) % 3]
        axis = B - A
        axis = axis / np.linalg.norm(axis)
        n1, n2 = mesh.face_normals[fi], mesh.face_normals[nb]
        d = _rotate_between(d, n1, n2, axis)
        nbv = mesh.face_normals[nb]
        d = d - (d @ nbv) * nbv
        d /= np.linalg.norm(d)
        fi = nb
    pos = np.array([mesh.point(q) for q in pts])
    L = float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
    return GeodesicPolyline(pts, L, hit_boundary=hit_boundary)


def _rotate_between(d, n1, n2, axis):
    c = float(np.clip(n1 @ n2, -1.0, 1.0))
    s = float(np.cross(n1, n2) @ axis)
    ang = math.atan2(s, c)
    return _rotate_about(d, axis, ang)


def _rotate_about(v, axis, ang):
    c, s = math.cos(ang), math.sin(ang)
    return v * c + np.cross(axis, v) * s + axis * (axis @ v) * (1 - c)


def geodesic_circle(mesh: TriMesh, center: SurfacePoint, radius: float,
                    k: int = DEFAULT_STEINER):
    """Iso-contour of the distance field at the given radius.

    Returns (GeodesicPolyline, closed: bool). Raises if the radius exceeds
    the field maximum.
    """
    gd = GraphDistance(mesh, center, k)
    vals = gd.vertex_values()
    if radius >= vals.max():
        raise GeodesicError(f"radius {radius} exceeds field maximum {vals.max():.4g}")
    if radius <= 0:
        raise GeodesicError("radius must be positive")
    # push vertex values off the exact contour so cuts stay pairwise per face
    eps = 1e-9 * max(radius, vals.max())
    vals = np.where(np.abs(vals - radius) < eps, radius + eps, vals)
    segs = {}
    pts_by_edge = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        cuts = []
        for (u, v) in ((a, b), (b, c), (c, a)):
            du, dv = vals[u], vals[v]
            if (du - radius) * (dv - radius) < 0:
                t = (radius - du) / (dv - du)
                key = (min(u, v), max(u, v))
                if key not in pts_by_edge:
                    tt = t if u < v else 1.0 - t
                    pts_by_edge[key] = (1 - tt) * mesh.vertices[key[0]] + tt * mesh.vertices[key[1]]
                cuts.append(key)
        if len(cuts) == 2:
            segs[fi] = tuple(cuts)
    if not segs:
        raise GeodesicError("contour is empty at this radius")
    # chain segments via shared edges
    adj = {}
    for fi, (e1, e2) in segs.items():
        adj.setdefault(e1, []).append(fi)
        adj.setdefault(e2, []).append(fi)
    start_edge = next((e for e, fs in adj.items() if len(fs) == 1), None)
    closed = start_edge is None
    if closed:
        start_edge = next(iter(adj))
    chain = [start_edge]
    used = set()
    cur = start_edge
    while True:
        nxt_face = next((f for f in adj[cur] if f not in used), None)
        if nxt_face is None:
            break
        used.add(nxt_face)
        e1, e2 = segs[nxt_face]
        cur = e2 if e1 == cur else e1
        if cur == chain[0]:
            break
        chain.append(cur)
    pos = np.array([pts_by_edge[e] for e in chain])
    sps = [mesh.surface_point_near(p) for p in pos]
    loop = pos if not closed else np.vstack([pos, pos[:1]])
    L = float(np.linalg.norm(np.diff(loop, axis=0), axis=1).sum())
    # orient consistently with the surface normal around the center
    cpos = mesh.point(center)
    nrm = mesh.face_normals[center.face]
    area2 = sum(np.cross(p - cpos, q - cpos) @ nrm for p, q in zip(pos, pos[1:]))
    if area2 < 0:
        sps = sps[::-1]
    return GeodesicPolyline(sps, L), closed
