import json

import pytest
from click.testing import CliRunner

from eggrid.cli import main
from eggrid.fixtures import flat_patch, two_bumps
from eggrid.mesh import dump_mesh_obj

CORNERS = [[0.1, 0.1, 0], [0.9, 0.1, 0], [0.9, 0.9, 0], [0.1, 0.9, 0]]


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def flat_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "flat.obj"
    path.write_text(dump_mesh_obj(flat_patch(21, 21)))
    return str(path)


@pytest.fixture(scope="module")
def flat_project(runner, flat_obj, tmp_path_factory):
    d = tmp_path_factory.mktemp("proj")
    corners = d / "corners.json"
    corners.write_text(json.dumps(CORNERS))
    proj = d / "p.json"
    r = runner.invoke(main, ["patch", flat_obj, "--corners", str(corners),
                             "-o", str(proj)])
    assert r.exit_code == 0, r.output + str(r.stderr_bytes)
    for args in (["layout", str(proj)],
                 ["members", str(proj), "--count-u", "3", "--count-v", "3"]):
        r = runner.invoke(main, args)
        assert r.exit_code == 0
    return str(proj)


def test_analyze_flat(runner, flat_obj):
    r = runner.invoke(main, ["analyze", flat_obj])
    assert r.exit_code == 0
    out = json.loads(r.output)
    assert out["unbounded"] is True
    assert abs(out["K_max"]) < 1e-6


def test_patch_reports_eta_one(runner, flat_project):
    # the saved project carries the eta report from the patch stage
    data = json.loads(open(flat_project).read())
    eta = data["reports"]["patch"]["eta"]
    assert eta["u"]["eta"] == 1.0 and eta["v"]["eta"] == 1.0


def test_export_json_and_svg(runner, flat_project, tmp_path):
    out = tmp_path / "layout.json"
    r = runner.invoke(main, ["export", flat_project, "--format", "json",
                             "-o", str(out)])
    assert r.exit_code == 0
    data = json.loads(out.read_bytes())
    assert data["schema"] == "eggrid-layout/1"
    svg = tmp_path / "layout.svg"
    r = runner.invoke(main, ["export", flat_project, "--format", "svg",
                             "-o", str(svg)])
    assert r.exit_code == 0
    assert svg.read_bytes().startswith(b"<?xml")


def test_export_deterministic(runner, flat_project, tmp_path):
    blobs = []
    for k in range(2):
        out = tmp_path / f"l{k}.json"
        r = runner.invoke(main, ["export", flat_project, "--format", "json",
                                 "-o", str(out)])
        assert r.exit_code == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_study_scaling_csv(runner, flat_project):
    r = runner.invoke(main, ["study", "scaling", flat_project,
                             "--factors", "1", "--no-gravity"])
    assert r.exit_code == 0
    lines = r.output.strip().splitlines()
    assert lines[0] == "f,nrmse,converged,error"
    f, nrmse, converged, err = lines[1].split(",")
    assert float(nrmse) < 1e-9 and converged == "1"


def test_split_workflow1_two_bumps(runner, tmp_path):
    obj = tmp_path / "bumps.obj"
    obj.write_text(dump_mesh_obj(two_bumps()))
    corners = tmp_path / "corners.json"
    corners.write_text(json.dumps([[0.4, 0.4, 0], [2.6, 0.4, 0],
                                   [2.6, 1.6, 0], [0.4, 1.6, 0]]))
    proj = tmp_path / "p.json"
    r = runner.invoke(main, ["patch", str(obj), "--corners", str(corners),
                             "-o", str(proj)])
    assert r.exit_code == 0
    r = runner.invoke(main, ["split", str(proj), "--workflow", "1"])
    assert r.exit_code == 0
    report = json.loads(r.output)["report"]
    assert report["patches"] > 1


def test_error_json_on_stderr(runner, flat_obj, tmp_path):
    corners = tmp_path / "corners.json"
    corners.write_text(json.dumps(CORNERS[:3]))
    r = runner.invoke(main, ["patch", flat_obj, "--corners", str(corners),
                             "-o", str(tmp_path / "p.json")])
    assert r.exit_code != 0
    err = json.loads(r.stderr)
    assert "message" in err and "error" in err


def test_missing_project_file(runner):
    r = runner.invoke(main, ["layout", "/nonexistent/p.json"])
    assert r.exit_code != 0


def test_config_override(runner, flat_obj, tmp_path):
    corners = tmp_path / "corners.json"
    corners.write_text(json.dumps(CORNERS))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"count_u": 2, "count_v": 2}))
    proj = tmp_path / "p.json"
    for args in (["patch", flat_obj, "--corners", str(corners),
                  "-o", str(proj), "--config", str(cfg)],
                 ["layout", str(proj)],
                 ["members", str(proj)]):
        r = runner.invoke(main, args)
        assert r.exit_code == 0
    data = json.loads(open(proj).read())
    # 2 interior members plus the 0/1 extremes from the config default
    coords = data["members"]["u"]["boundaries"][0]["coords"]
    assert len(coords) == 4
