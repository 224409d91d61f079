import numpy as np
import pytest

from eggrid.fixtures import flat_patch, gaussian_bump
from eggrid.mesh import dump_mesh_obj
from eggrid.project import DEFAULT_CONFIG, Project, ProjectError

CORNERS = [(0.1, 0.1, 0), (0.9, 0.1, 0), (0.9, 0.9, 0), (0.1, 0.9, 0)]


@pytest.fixture(scope="module")
def flat_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "flat.obj"
    path.write_text(dump_mesh_obj(flat_patch(21, 21)))
    return str(path)


@pytest.fixture()
def flat_project(flat_obj):
    proj = Project()
    proj.load_mesh_file(flat_obj)
    proj.set_corners(CORNERS)
    return proj


@pytest.fixture(scope="module")
def pipelined(flat_obj):
    proj = Project()
    proj.load_mesh_file(flat_obj)
    proj.set_corners(CORNERS)
    proj.run_layout()
    proj.run_members(count_u=3, count_v=3)
    proj.run_build_layouts()
    return proj


def test_default_config_keys():
    for key in ("eta_max", "k_min", "k_max", "width", "thickness",
                "material", "screw_diameter", "count_u", "count_v",
                "n_edges"):
        assert key in DEFAULT_CONFIG


def test_analyze_flat_unbounded(flat_obj):
    proj = Project()
    proj.load_mesh_file(flat_obj)
    out = proj.analyze()
    assert out["unbounded"] is True
    assert out["injectivity_bound"] is None
    assert abs(out["K_max"]) < 1e-6
    assert out["hotspots"] == []
    assert out["vertices"] == 441


def test_analyze_requires_mesh():
    with pytest.raises(ProjectError):
        Project().analyze()


def test_revision_increments(flat_project):
    r0 = flat_project.revision
    flat_project.run_layout()
    assert flat_project.revision == r0 + 1
    flat_project.run_members()
    assert flat_project.revision == r0 + 2


def test_stage_order_enforced(flat_project):
    with pytest.raises(ProjectError):
        flat_project.run_members()
    with pytest.raises(ProjectError):
        Project().run_split(workflow=1)


def test_stale_flags(flat_project):
    flat_project.run_layout()
    flat_project.run_members()
    assert flat_project.stale() == []
    # re-splitting bumps the network stamp above the derived artifacts
    flat_project.run_split(workflow=1)
    assert set(flat_project.stale()) == {"cladding", "members"}
    flat_project.run_layout()
    flat_project.run_members()
    assert flat_project.stale() == []


def test_set_corners_drops_downstream(flat_project):
    flat_project.run_layout()
    flat_project.set_corners(CORNERS)
    assert flat_project.cladding == {}
    assert "cladding" not in flat_project.stamps


def test_roundtrip_byte_identical(pipelined, tmp_path):
    path = tmp_path / "p.json"
    pipelined.save(path)
    again = Project.load(path)
    assert again.dumps() == pipelined.dumps()


def test_roundtrip_preserves_boundaries(pipelined, tmp_path):
    path = tmp_path / "p.json"
    pipelined.save(path)
    again = Project.load(path)
    q0 = pipelined.network.patches[0]
    q1 = again.network.patches[0]
    for b0, b1 in zip(q0.boundaries, q1.boundaries):
        assert b0.length == b1.length
        assert len(b0.points) == len(b1.points)
    for f in ("u", "v"):
        np.testing.assert_allclose(again.members[f].boundaries[0].coords,
                                   pipelined.members[f].boundaries[0].coords)


def test_roundtrip_split_network(tmp_path):
    # via-peak split edges must survive serialization without re-solving
    mesh = gaussian_bump(41, 41, amp=0.6, sigma=0.3)
    path = tmp_path / "bump.obj"
    path.write_text(dump_mesh_obj(mesh))
    proj = Project()
    proj.load_mesh_file(str(path))
    proj.set_corners([(0.3, 0.3, 0), (1.7, 0.3, 0),
                      (1.7, 1.7, 0), (0.3, 1.7, 0)])
    proj.run_split(workflow=1)
    assert len(proj.network.patches) > 1
    ppath = tmp_path / "p.json"
    proj.save(ppath)
    again = Project.load(ppath)
    assert again.dumps() == proj.dumps()
    for qa, qb in zip(proj.network.patches, again.network.patches):
        for ba, bb in zip(qa.boundaries, qb.boundaries):
            assert ba.length == bb.length
            assert [(p.face, p.bary) for p in ba.points] == \
                [(p.face, p.bary) for p in bb.points]


def test_load_unknown_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema":"eggrid-project/99","revision":0}')
    with pytest.raises(ProjectError):
        Project.load(path)


def test_unknown_study_kind(pipelined):
    with pytest.raises(ProjectError):
        pipelined.run_study("thermal")


def test_alpha_override_out_of_interval(flat_project):
    from eggrid.patchlayout import PatchError
    with pytest.raises(PatchError):
        flat_project.run_layout(alpha_override={0: 1e-6})


def test_simulate_flat(pipelined):
    out = pipelined.run_simulate()
    assert out["patches"][0]["converged"]
    assert out["patches"][0]["nrmse"] < 1e-9
    assert pipelined.sim is not None
