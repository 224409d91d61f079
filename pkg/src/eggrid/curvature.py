"""Discrete curvature: angle-defect Gaussian curvature and quadric-fit
principal curvatures."""
from __future__ import annotations

import numpy as np

from .mesh import ScalarField, TriMesh


def _angles_and_areas(mesh: TriMesh):
    V, F = mesh.vertices, mesh.faces
    nv = len(V)
    angle_sum = np.zeros(nv)
    mixed_area = np.zeros(nv)
    for fi, (a, b, c) in enumerate(F):
        P = V[[a, b, c]]
        for j, v in enumerate((a, b, c)):
            e1 = P[(j + 1) % 3] - P[j]
            e2 = P[(j + 2) % 3] - P[j]
            cosang = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            angle_sum[v] += ang
        # mixed Voronoi area (Meyer et al. style)
        lens2 = np.array([
            np.sum((P[1] - P[2]) ** 2),
            np.sum((P[2] - P[0]) ** 2),
            np.sum((P[0] - P[1]) ** 2),
        ])
        area = mesh.face_areas[fi]
        cots = np.empty(3)
        for j in range(3):
            e1 = P[(j + 1) % 3] - P[j]
            e2 = P[(j + 2) % 3] - P[j]
            cross = np.linalg.norm(np.cross(e1, e2))
            cots[j] = np.dot(e1, e2) / cross if cross > 0 else 0.0
        if np.all(cots >= 0):
            for j, v in enumerate((a, b, c)):
                mixed_area[v] += (lens2[(j + 2) % 3] * cots[(j + 2) % 3]
                                  + lens2[(j + 1) % 3] * cots[(j + 1) % 3]) / 8.0
        else:
            obtuse = int(np.argmin(cots))
            for j, v in enumerate((a, b, c)):
                mixed_area[v] += area / 2.0 if j == obtuse else area / 4.0
    return angle_sum, mixed_area


def gaussian_curvature(mesh: TriMesh) -> ScalarField:
    """Angle defect over mixed Voronoi area; boundary defect is pi-based."""
    key = "gaussian_curvature"
    if key in mesh._cache:
        return mesh._cache[key]
    angle_sum, area = _angles_and_areas(mesh)
    full = np.where(mesh.boundary_vertices, np.pi, 2 * np.pi)
    K = (full - angle_sum) / np.maximum(area, 1e-300)
    field = ScalarField(K, kind="gaussian-curvature")
    mesh._cache[key] = field
    return field


def angle_defect_total(mesh: TriMesh) -> float:
    """Sum of raw angle defects (Gauss-Bonnet check on closed meshes)."""
    angle_sum, _ = _angles_and_areas(mesh)
    full = np.where(mesh.boundary_vertices, np.pi, 2 * np.pi)
    return float(np.sum(full - angle_sum))


class CurvatureFrame:
    """Per-vertex principal directions and values, kappa1 >= kappa2."""

    def __init__(self, k1, k2, d1, d2, flagged):
        self.k1 = np.asarray(k1)
        self.k2 = np.asarray(k2)
        self.d1 = np.asarray(d1)
        self.d2 = np.asarray(d2)
        self.flagged = np.asarray(flagged, dtype=bool)


def _ring(mesh, v, depth):
    seen = {v}
    frontier = {v}
    for _ in range(depth):
        nxt = set()
        for u in frontier:
            for fi in mesh.vertex_faces[u]:
                nxt.update(int(x) for x in mesh.faces[fi])
        frontier = nxt - seen
        seen |= nxt
    return sorted(seen - {v})


def principal_curvatures(mesh: TriMesh) -> CurvatureFrame:
    """Quadric fit z = a x^2 + b xy + c y^2 + d x + e y over 2-ring
    neighborhoods in the vertex normal frame; 3-ring fallback, then flag."""
    key = "principal_curvatures"
    if key in mesh._cache:
        return mesh._cache[key]
    nv = len(mesh.vertices)
    k1 = np.zeros(nv)
    k2 = np.zeros(nv)
    d1 = np.zeros((nv, 3))
    d2 = np.zeros((nv, 3))
    flagged = np.zeros(nv, dtype=bool)
    for v in range(nv):
        n = mesh.vertex_normal(v)
        t1 = np.cross(n, [1.0, 0.0, 0.0])
        if np.linalg.norm(t1) < 1e-6:
            t1 = np.cross(n, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        ok = False
        for depth in (2, 3):
            nbrs = _ring(mesh, v, depth)
            if len(nbrs) < 5:
                continue
            rel = mesh.vertices[nbrs] - mesh.vertices[v]
            x = rel @ t1
            y = rel @ t2
            z = rel @ n
            A = np.column_stack([x * x, x * y, y * y, x, y])
            sol, res, rank, _ = np.linalg.lstsq(A, z, rcond=None)
            if rank == 5:
                ok = True
                break
        if not ok:
            flagged[v] = True
            continue
        a, b, c, d, e = sol
        # first/second fundamental forms of the height field at the origin
        E = 1 + d * d
        Fm = d * e
        G = 1 + e * e
        norm = np.sqrt(1 + d * d + e * e)
        # sign so that a sphere with outward normals reads kappa = +1/R
        L, M, N = -2 * a / norm, -b / norm, -2 * c / norm
        shape = np.linalg.solve(np.array([[E, Fm], [Fm, G]]),
                                np.array([[L, M], [M, N]]))
        shape = 0.5 * (shape + shape.T)
        w, vecs = np.linalg.eigh(shape)
        order = np.argsort(w)[::-1]
        w, vecs = w[order], vecs[:, order]
        k1[v], k2[v] = w
        for arr, col in ((d1, 0), (d2, 1)):
            dvec = vecs[0, col] * t1 + vecs[1, col] * t2
            nn = np.linalg.norm(dvec)
            arr[v] = dvec / nn if nn > 0 else t1
    frame = CurvatureFrame(k1, k2, d1, d2, flagged)
    mesh._cache[key] = frame
    return frame
