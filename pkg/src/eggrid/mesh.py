"""Triangle mesh carrier with half-edge style adjacency and OBJ loading."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


class NonManifoldError(MeshError):
    def __init__(self, edge, count):
        self.edge = tuple(edge)
        super().__init__(f"edge {self.edge} shared by {count} faces")


class MultipleComponentsError(MeshError):
    def __init__(self, sizes):
        self.component_sizes = sorted(sizes, reverse=True)
        super().__init__(f"mesh has {len(sizes)} components with sizes {self.component_sizes}")


MIN_FACE_AREA = 1e-12


@dataclass(frozen=True)
class SurfacePoint:
    """A point on the mesh: face index + barycentric weights (sum to 1)."""

    face: int
    bary: tuple

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=float)
        if b.shape != (3,):
            raise MeshError("barycentric weights must have length 3")
        if np.any(b < -1e-12) or abs(b.sum() - 1.0) > 1e-9:
            raise MeshError(f"invalid barycentric weights {tuple(b)}")
        object.__setattr__(self, "bary", tuple(np.clip(b, 0.0, 1.0) / np.clip(b, 0.0, 1.0).sum()))

    def canonical(self, mesh: "TriMesh") -> "SurfacePoint":
        """Zero out weights below 1e-12 so edge/vertex points are exact."""
        b = np.asarray(self.bary)
        b = np.where(b < 1e-12, 0.0, b)
        return SurfacePoint(self.face, tuple(b / b.sum()))


class TriMesh:
    """Immutable triangle mesh: positions, faces and derived connectivity.

    Construction validates edge-manifoldness, consistent orientation,
    minimum face area and single-component connectivity.
    """

    def __init__(self, vertices, faces, warn_resolution=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be (m, 3)")
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self):
        V, F = self.vertices, self.faces
        e1 = V[F[:, 1]] - V[F[:, 0]]
        e2 = V[F[:, 2]] - V[F[:, 0]]
        cross = np.cross(e1, e2)
        self.face_areas = 0.5 * np.linalg.norm(cross, axis=1)
        if np.any(self.face_areas <= MIN_FACE_AREA):
            bad = int(np.argmin(self.face_areas))
            raise MeshError(f"face {bad} has area {self.face_areas[bad]:.3e} <= {MIN_FACE_AREA}")
        self.face_normals = cross / (2.0 * self.face_areas[:, None])

        # directed-edge map for orientation + neighbor lookup
        directed = {}
        edge_faces = {}
        for fi, (a, b, c) in enumerate(F):
            for k, (u, v) in enumerate(((a, b), (b, c), (c, a))):
                key = (min(u, v), max(u, v))
                edge_faces.setdefault(key, []).append((fi, k))
        for key, lst in edge_faces.items():
            if len(lst) > 2:
                raise NonManifoldError(key, len(lst))
        for fi, (a, b, c) in enumerate(F):
            for k, (u, v) in enumerate(((a, b), (b, c), (c, a))):
                if (u, v) in directed:
                    raise MeshError(f"inconsistent orientation at directed edge ({u},{v})")
                directed[(u, v)] = (fi, k)
        self.edge_faces = edge_faces
        self._directed = directed

        # neighbor face across local edge k of face fi (-1 at boundary)
        self.face_neighbors = -np.ones((len(F), 3), dtype=np.int64)
        for fi, (a, b, c) in enumerate(F):
            for k, (u, v) in enumerate(((a, b), (b, c), (c, a))):
                opp = directed.get((v, u))
                if opp is not None:
                    self.face_neighbors[fi, k] = opp[0]

        # vertex -> incident faces
        self.vertex_faces = [[] for _ in range(len(V))]
        for fi, f in enumerate(F):
            for v in f:
                self.vertex_faces[v].append(fi)

        self.boundary_vertices = np.zeros(len(V), dtype=bool)
        for (u, v), lst in edge_faces.items():
            if len(lst) == 1:
                self.boundary_vertices[u] = True
                self.boundary_vertices[v] = True

        self._check_connected()

        bbox = V.max(axis=0) - V.min(axis=0)
        self.diameter = float(np.linalg.norm(bbox))
        edges = np.array(list(edge_faces.keys()))
        self.edge_lengths_mean = float(np.linalg.norm(V[edges[:, 0]] - V[edges[:, 1]], axis=1).mean())
        self._cache = {}

    def _check_connected(self):
        n = len(self.vertices)
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        edges = np.array(list(self.edge_faces.keys()))
        m = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
        ncomp, labels = connected_components(m, directed=False)
        if ncomp > 1:
            sizes = [int((labels == i).sum()) for i in range(ncomp)]
            raise MultipleComponentsError(sizes)

    # -- queries -----------------------------------------------------------

    def point(self, sp: SurfacePoint) -> np.ndarray:
        f = self.faces[sp.face]
        return np.asarray(sp.bary) @ self.vertices[f]

    def vertex_point(self, v: int) -> SurfacePoint:
        fi = self.vertex_faces[v][0]
        b = np.zeros(3)
        b[list(self.faces[fi]).index(v)] = 1.0
        return SurfacePoint(fi, tuple(b))

    def edge_point(self, fi: int, k: int, t: float) -> SurfacePoint:
        """Point at parameter t along local edge k of face fi."""
        b = np.zeros(3)
        b[k] = 1.0 - t
        b[(k + 1) % 3] = t
        return SurfacePoint(fi, tuple(b))

    def face_vertices(self, fi: int) -> np.ndarray:
        return self.vertices[self.faces[fi]]

    def neighbor_across(self, fi: int, k: int) -> int:
        return int(self.face_neighbors[fi, k])

    def shared_edge_local(self, fi: int, fj: int):
        """Local edge indices (ki, kj) of the edge shared by faces fi, fj."""
        for k in range(3):
            if self.face_neighbors[fi, k] == fj:
                for k2 in range(3):
                    if self.face_neighbors[fj, k2] == fi:
                        return k, k2
        raise MeshError(f"faces {fi} and {fj} are not adjacent")

    def total_area(self) -> float:
        return float(self.face_areas.sum())

    def vertex_normal(self, v: int) -> np.ndarray:
        n = np.zeros(3)
        for fi in self.vertex_faces[v]:
            n += self.face_normals[fi] * self.face_areas[fi]
        nn = np.linalg.norm(n)
        return n / nn if nn > 0 else np.array([0.0, 0.0, 1.0])

    def nearest_vertex(self, xyz) -> int:
        return int(np.argmin(np.linalg.norm(self.vertices - np.asarray(xyz), axis=1)))

    def surface_point_near(self, xyz) -> SurfacePoint:
        """Closest surface point to an arbitrary 3D location (per-face projection)."""
        xyz = np.asarray(xyz, dtype=float)
        v = self.nearest_vertex(xyz)
        best, best_d = None, np.inf
        for fi in self.vertex_faces[v]:
            sp, d = self._project_to_face(fi, xyz)
            if d < best_d:
                best, best_d = sp, d
        return best

    def neighbor_across_edge(self, fi, edge):
        u, v = edge
        for k in range(3):
            a, b = self.faces[fi][k], self.faces[fi][(k + 1) % 3]
            if {int(a), int(b)} == {u, v}:
                return int(self.face_neighbors[fi, k])
        return -2

    def surface_point_near_on_face(self, fi, xyz):
        sp, _ = self._project_to_face(fi, np.asarray(xyz, dtype=float))
        return sp

    def _project_to_face(self, fi, xyz):
        tri = self.face_vertices(fi)
        e0, e1 = tri[1] - tri[0], tri[2] - tri[0]
        w = xyz - tri[0]
        a, b, c = e0 @ e0, e0 @ e1, e1 @ e1
        d0, d1 = w @ e0, w @ e1
        det = a * c - b * b
        s = (c * d0 - b * d1) / det
        t = (a * d1 - b * d0) / det
        s, t = max(0.0, s), max(0.0, t)
        if s + t > 1.0:
            tot = s + t
            s, t = s / tot, t / tot
        sp = SurfacePoint(fi, (1.0 - s - t, s, t))
        return sp, float(np.linalg.norm(self.point(sp) - xyz))


@dataclass
class GeodesicPolyline:
    """Polyline of surface points; length is the embedded arc length."""

    points: list
    length: float
    straightening_residual: float = 0.0
    hit_boundary: bool = False

    def positions(self, mesh: TriMesh) -> np.ndarray:
        return np.array([mesh.point(p) for p in self.points])


@dataclass
class ScalarField:
    values: np.ndarray
    kind: str = "other"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise MeshError("scalar field contains non-finite values")


def polyline_from_positions(mesh, sps):
    pos = np.array([mesh.point(p) for p in sps])
    length = float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
    return GeodesicPolyline(list(sps), length)


# -- OBJ loading -----------------------------------------------------------

def load_mesh(source, fmt="OBJ", warn_edge_ratio=None) -> TriMesh:
    """Parse an OBJ stream (positions + faces; normals/uv ignored).

    Non-triangular faces are fan-triangulated. Raises MeshError subclasses
    on non-manifold or multi-component input.
    """
    if fmt.upper() != "OBJ":
        raise MeshError(f"unsupported format {fmt!r}")
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode())
    elif isinstance(source, str):
        source = io.StringIO(source)
    verts, faces = [], []
    for line in source:
        if isinstance(line, bytes):
            line = line.decode()
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise MeshError("OBJ stream contains no faces")
    return TriMesh(np.array(verts), np.array(faces))


def dump_mesh_obj(mesh: TriMesh) -> str:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"
