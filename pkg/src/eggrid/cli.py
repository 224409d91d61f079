"""Command-line driver: every failure exits nonzero with a JSON error on
stderr; artifacts share the service's serialization path."""
from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np

from .gridexport import export_json, export_svg
from .mesh import MeshError
from .patchlayout import InfeasibleLayout, PatchError
from .project import MATERIALS, Project, ProjectError, json_default


def _fail(exc, code=1):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, InfeasibleLayout):
        payload["family"] = exc.family
        payload["detail"] = exc.detail
    sys.stderr.write(json.dumps(payload) + "\n")
    sys.exit(code)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PatchError, MeshError, OSError, ValueError, KeyError) as exc:
            _fail(exc)
    return wrapper


def _emit(obj):
    click.echo(json.dumps(obj, sort_keys=True, separators=(",", ":"),
                          default=json_default))


def _load(project_path, config=None):
    proj = Project.load(project_path)
    if config:
        with open(config) as fh:
            proj.config.update(json.load(fh))
    return proj


@click.group()
def main():
    """Elastic geodesic grid pipeline."""


@main.command()
@click.argument("mesh_path", type=click.Path(exists=True))
@_guard
def analyze(mesh_path):
    """Curvature statistics, injectivity bound and hotspot suggestions."""
    proj = Project()
    proj.load_mesh_file(mesh_path)
    _emit(proj.analyze())


@main.command()
@click.argument("mesh_path", type=click.Path(exists=True))
@click.option("--corners", required=True, type=click.Path(exists=True),
              help="JSON file with four corner points ([x,y,z] rows).")
@click.option("--output", "-o", required=True, type=click.Path(),
              help="Project file to write.")
@click.option("--config", type=click.Path(exists=True))
@_guard
def patch(mesh_path, corners, output, config):
    """Build the initial geodesic quad and report its diagnostics."""
    proj = Project()
    if config:
        with open(config) as fh:
            proj.config.update(json.load(fh))
    proj.load_mesh_file(mesh_path)
    with open(corners) as fh:
        pts = json.load(fh)
    if len(pts) != 4:
        raise PatchError("corner file must contain exactly four points")
    report = proj.set_corners([np.asarray(p, dtype=float) for p in pts])
    proj.save(output)
    _emit({"report": report, "revision": proj.revision})


@main.command()
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--workflow", type=click.Choice(["1", "2"]), default="1")
@click.option("--auto", is_flag=True, default=False,
              help="Accept all proposed corners unchanged (workflow 2).")
@click.option("--config", type=click.Path(exists=True))
@_guard
def split(project_path, workflow, auto, config):
    """Split the network until every patch is feasible."""
    del auto  # proposals are auto-accepted in batch mode either way
    proj = _load(project_path, config)
    report = proj.run_split(workflow=int(workflow))
    proj.save(project_path)
    _emit({"report": report, "revision": proj.revision})


@main.command()
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--alpha", type=str, default=None,
              help="Override angles as 'pid=degrees,...' instead of "
                   "optimizing.")
@click.option("--config", type=click.Path(exists=True))
@_guard
def layout(project_path, alpha, config):
    """Optimize the free planar angle and fit cladding functions."""
    proj = _load(project_path, config)
    override = None
    if alpha:
        override = {}
        for part in alpha.split(","):
            pid, deg = part.split("=")
            override[int(pid)] = np.radians(float(deg))
    report = proj.run_layout(alpha_override=override)
    proj.save(project_path)
    _emit({"report": report, "revision": proj.revision})


@main.command()
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--count-u", type=int, default=None)
@click.option("--count-v", type=int, default=None)
@click.option("--weights", type=click.Path(exists=True), default=None,
              help="JSON {family: {boundary key: weight}}.")
@click.option("--config", type=click.Path(exists=True))
@_guard
def members(project_path, count_u, count_v, weights, config):
    """Distribute grid members over the patch network."""
    proj = _load(project_path, config)
    wts = None
    if weights:
        with open(weights) as fh:
            raw = json.load(fh)
        wts = {f: {int(k): v for k, v in d.items()} for f, d in raw.items()}
    report = proj.run_members(count_u=count_u, count_v=count_v, weights=wts)
    proj.save(project_path)
    _emit({"report": report, "revision": proj.revision})


@main.command()
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["json", "svg"]),
              default="json")
@click.option("--output", "-o", required=True, type=click.Path(),
              help="Output file (single patch) or prefix (several).")
@click.option("--config", type=click.Path(exists=True))
@_guard
def export(project_path, fmt, output, config):
    """Write fabrication artifacts for every patch."""
    proj = _load(project_path, config)
    if not proj.layouts:
        proj.run_build_layouts()
        proj.save(project_path)
    writer = export_json if fmt == "json" else export_svg
    paths = []
    for pid, lay in enumerate(proj.layouts):
        path = output if len(proj.layouts) == 1 else \
            f"{output}.{pid}.{fmt}"
        with open(path, "wb") as fh:
            fh.write(writer(lay))
        paths.append(path)
    _emit({"files": paths, "revision": proj.revision})


@main.command()
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--gravity", is_flag=True, default=False)
@click.option("--scale", type=float, default=1.0)
@click.option("--material", type=click.Choice(sorted(MATERIALS)),
              default=None)
@click.option("--config", type=click.Path(exists=True))
@_guard
def simulate(project_path, gravity, scale, material, config):
    """Solve the deployed equilibrium and report NRMSE per patch."""
    proj = _load(project_path, config)
    result = proj.run_simulate(gravity=gravity, scale=scale,
                               material=material)
    proj.save(project_path)
    summary = {"revision": proj.revision, "gravity": gravity,
               "scale": scale, "material": result["material"],
               "patches": [{"nrmse": p["nrmse"],
                            "converged": p["converged"],
                            "energies": p["energies"]}
                           for p in result["patches"]]}
    _emit(summary)


@main.command()
@click.argument("kind", type=click.Choice(["scaling", "material"]))
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--factors", type=str, default="1,2,4",
              help="Scaling factors, comma separated.")
@click.option("--scale", type=float, default=5.0,
              help="Scale for the material study.")
@click.option("--gravity/--no-gravity", default=True)
@click.option("--config", type=click.Path(exists=True))
@_guard
def study(kind, project_path, factors, scale, gravity, config):
    """Run a scaling or material study; CSV on stdout."""
    proj = _load(project_path, config)
    fac = [float(x) for x in factors.split(",")]
    rows = proj.run_study(kind, factors=fac, scale=scale, gravity=gravity)
    if kind == "scaling":
        click.echo("f,nrmse,converged,error")
        for r in rows:
            click.echo(f"{r['f']},{'' if r['nrmse'] is None else r['nrmse']}"
                       f",{int(r['converged'])},{r['error'] or ''}")
    else:
        click.echo("material,lambda,nrmse,converged")
        for r in rows:
            click.echo(f"{r['material']},{r['lambda']},{r['nrmse']}"
                       f",{int(r['converged'])}")


@main.command()
@click.argument("project_path", type=click.Path(exists=True))
@click.option("--port", type=int, default=8787)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--config", type=click.Path(exists=True))
@_guard
def serve(project_path, port, host, config):
    """Serve the project over HTTP/JSON."""
    import uvicorn

    from .service import create_app

    proj = _load(project_path, config)
    uvicorn.run(create_app(proj), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
