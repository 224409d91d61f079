import io

import numpy as np
import pytest

from eggrid import fixtures
from eggrid.mesh import (
    MeshError,
    MultipleComponentsError,
    NonManifoldError,
    SurfacePoint,
    TriMesh,
    dump_mesh_obj,
    load_mesh,
)

QUAD_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
f 1 2 3 4
"""


def test_load_obj_fan_triangulation():
    m = load_mesh(QUAD_OBJ)
    assert len(m.vertices) == 4
    assert len(m.faces) == 2
    assert abs(m.total_area() - 1.0) < 1e-12


def test_load_obj_bytes_and_stream():
    m1 = load_mesh(QUAD_OBJ.encode())
    m2 = load_mesh(io.StringIO(QUAD_OBJ))
    assert np.allclose(m1.vertices, m2.vertices)


def test_obj_round_trip(flat21):
    text = dump_mesh_obj(flat21)
    m2 = load_mesh(text)
    assert np.array_equal(m2.faces, flat21.faces)
    assert np.allclose(m2.vertices, flat21.vertices)


def test_no_faces_rejected():
    with pytest.raises(MeshError):
        load_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\n")


def test_degenerate_face_rejected():
    V = [[0, 0, 0], [1, 0, 0], [2, 0, 0]]
    with pytest.raises(MeshError):
        TriMesh(V, [[0, 1, 2]])


def test_inconsistent_orientation_rejected():
    V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
    # both faces traverse edge (0,1) in the same direction
    with pytest.raises(MeshError):
        TriMesh(V, [[0, 1, 2], [0, 1, 3]])


def test_non_manifold_edge_rejected():
    V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]]
    with pytest.raises(NonManifoldError) as err:
        TriMesh(V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    assert err.value.edge == (0, 1)


def test_multiple_components_rejected():
    V = [[0, 0, 0], [1, 0, 0], [0, 1, 0],
         [5, 0, 0], [6, 0, 0], [5, 1, 0]]
    with pytest.raises(MultipleComponentsError) as err:
        TriMesh(V, [[0, 1, 2], [3, 4, 5]])
    assert err.value.component_sizes == [3, 3]


def test_surface_point_validation():
    with pytest.raises(MeshError):
        SurfacePoint(0, (0.5, 0.5))
    with pytest.raises(MeshError):
        SurfacePoint(0, (0.9, 0.3, -0.2))
    sp = SurfacePoint(0, (0.2, 0.3, 0.5))
    assert abs(sum(sp.bary) - 1.0) < 1e-12


def test_point_and_projection(flat21):
    xyz = np.array([0.314, 0.272, 0.0])
    sp = flat21.surface_point_near(xyz)
    assert np.allclose(flat21.point(sp), xyz, atol=1e-12)


def test_projection_clamps_outside(flat21):
    sp = flat21.surface_point_near([-0.5, 0.4, 0.3])
    p = flat21.point(sp)
    assert abs(p[0]) < 1e-12 and abs(p[2]) < 1e-12


def test_vertex_point_and_edge_point(flat21):
    sp = flat21.vertex_point(7)
    assert np.allclose(flat21.point(sp), flat21.vertices[7])
    ep = flat21.edge_point(0, 0, 0.25)
    a, b = flat21.faces[0][0], flat21.faces[0][1]
    expect = 0.75 * flat21.vertices[a] + 0.25 * flat21.vertices[b]
    assert np.allclose(flat21.point(ep), expect)


def test_face_neighbors_symmetry(flat21):
    for fi in range(len(flat21.faces)):
        for k in range(3):
            fj = flat21.neighbor_across(fi, k)
            if fj >= 0:
                ki, kj = flat21.shared_edge_local(fi, fj)
                assert flat21.neighbor_across(fj, kj) == fi


def test_boundary_vertices_flat(flat21):
    V = flat21.vertices
    on_rim = ((np.abs(V[:, 0]) < 1e-12) | (np.abs(V[:, 0] - 1) < 1e-12)
              | (np.abs(V[:, 1]) < 1e-12) | (np.abs(V[:, 1] - 1) < 1e-12))
    assert np.array_equal(flat21.boundary_vertices, on_rim)


def test_closed_sphere_has_no_boundary(sphere3):
    assert not sphere3.boundary_vertices.any()


def test_sphere_area(sphere4):
    assert abs(sphere4.total_area() - 4 * np.pi) / (4 * np.pi) < 0.01


def test_vertex_normal_sphere(sphere3):
    for v in range(0, len(sphere3.vertices), 37):
        n = sphere3.vertex_normal(v)
        r = sphere3.vertices[v] / np.linalg.norm(sphere3.vertices[v])
        assert np.dot(n, r) > 0.999


def test_canonical_zeroes_tiny_weights():
    sp = SurfacePoint(0, (1.0 - 2e-13, 2e-13, 0.0))
    m = fixtures.flat_patch(3, 3)
    c = sp.canonical(m)
    assert c.bary[1] == 0.0 and c.bary[2] == 0.0
