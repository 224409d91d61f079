"""HTTP/JSON service: one project per process, mutations serialized
through a single lock, optimistic concurrency via the revision counter."""
from __future__ import annotations

import json
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .curvature import gaussian_curvature
from .gridexport import export_json
from .geodesics import GraphDistance
from .mesh import MeshError, SurfacePoint
from .patchlayout import InfeasibleLayout, PatchError
from .project import MATERIALS, Project, ProjectError, json_default

MAX_BODY = 100 * 1024 * 1024


def _json(payload, status=200):
    return Response(content=json.dumps(payload, default=json_default),
                    media_type="application/json", status_code=status)


def _error(status, exc_or_msg):
    if isinstance(exc_or_msg, Exception):
        payload = {"error": type(exc_or_msg).__name__,
                   "message": str(exc_or_msg)}
        if isinstance(exc_or_msg, InfeasibleLayout):
            payload["family"] = exc_or_msg.family
            payload["detail"] = exc_or_msg.detail
    else:
        payload = {"error": "BadRequest", "message": str(exc_or_msg)}
    return JSONResponse(payload, status_code=status)


def _surface_point(mesh, spec):
    """Accept [face, [b0,b1,b2]] records or bare xyz positions."""
    if (isinstance(spec, (list, tuple)) and len(spec) == 2
            and isinstance(spec[1], (list, tuple)) and len(spec[1]) == 3
            and isinstance(spec[0], int)):
        face = int(spec[0])
        if face < 0 or face >= len(mesh.faces):
            raise PatchError(f"face {face} out of range")
        b = np.asarray(spec[1], dtype=float)
        if b.min() < -1e-9 or abs(b.sum() - 1.0) > 1e-6:
            raise ValueError("barycentric weights must be a partition of 1")
        return SurfacePoint(face, tuple(b / b.sum()))
    xyz = np.asarray(spec, dtype=float)
    if xyz.shape != (3,):
        raise ValueError("a point is [face,[b0,b1,b2]] or [x,y,z]")
    return mesh.surface_point_near(xyz)


def _polyline_payload(mesh, poly):
    return {"points": [[int(p.face), [float(b) for b in p.bary]]
                       for p in poly.points],
            "positions": poly.positions(mesh).tolist(),
            "length": float(poly.length)}


def create_app(project: Project) -> FastAPI:
    app = FastAPI(title="eggrid", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    lock = threading.Lock()

    async def _body(request):
        raw = await request.body()
        if len(raw) > MAX_BODY:
            raise ValueError("request body exceeds 100 MB")
        if not raw:
            return {}
        data = json.loads(raw)
        if not isinstance(data, dict):
            raise ValueError("request body must be a JSON object")
        return data

    def _mutate(data, fn):
        base = data.get("base_revision")
        if base is None:
            return _error(400, "base_revision is required for mutations")
        with lock:
            if int(base) != project.revision:
                return JSONResponse(
                    {"error": "StaleRevision",
                     "message": f"base revision {base} != current "
                                f"{project.revision}",
                     "revision": project.revision}, status_code=409)
            out = fn()
        out["revision"] = project.revision
        return _json(out)

    @app.exception_handler(InfeasibleLayout)
    async def _infeasible(request, exc):
        return _error(422, exc)

    @app.exception_handler(PatchError)
    async def _patch_error(request, exc):
        return _error(422, exc)

    @app.exception_handler(MeshError)
    async def _mesh_error(request, exc):
        return _error(422, exc)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return _error(400, exc)

    @app.exception_handler(json.JSONDecodeError)
    async def _json_error(request, exc):
        return _error(400, exc)

    @app.get("/mesh")
    def get_mesh():
        m = project.mesh
        return {"vertices": m.vertices.tolist(),
                "faces": m.faces.tolist(),
                "revision": project.revision}

    @app.get("/fields/curvature")
    def get_curvature():
        K = gaussian_curvature(project.mesh).values
        return {"K": K.tolist(), "revision": project.revision}

    @app.get("/fields/distance")
    def get_distance(face: int, b0: float, b1: float, b2: float):
        if face < 0 or face >= len(project.mesh.faces):
            return _error(404, f"face {face} not in mesh")
        src = SurfacePoint(face, (b0, b1, b2))
        gd = GraphDistance(project.mesh, src)
        return {"distance": gd.vertex_values().tolist(),
                "revision": project.revision}

    @app.get("/analyze")
    def get_analyze():
        out = project.analyze()
        out["revision"] = project.revision
        return out

    @app.get("/project")
    def get_project():
        return Response(content=project.dumps(),
                        media_type="application/json")

    @app.get("/patches")
    def get_patches():
        if project.network is None:
            return {"patches": [], "revision": project.revision}
        out = []
        for pid, quad in enumerate(project.network.patches):
            out.append({
                "id": pid,
                "corners": [project.mesh.point(c).tolist()
                            for c in quad.corners],
                "boundaries": [_polyline_payload(project.mesh, b)
                               for b in quad.boundaries],
            })
        return {"patches": out, "stale": project.stale(),
                "revision": project.revision}

    @app.post("/corners")
    async def post_corners(request: Request):
        data = await _body(request)
        if "corners" not in data or len(data["corners"]) != 4:
            return _error(400, "need exactly four corners")
        corners = [_surface_point(project.mesh, c) for c in data["corners"]]
        return _mutate(data, lambda: {"report":
                                      project.set_corners(corners)})

    @app.post("/split")
    async def post_split(request: Request):
        data = await _body(request)
        wf = data.get("workflow", 1)
        if wf not in (1, 2):
            return _error(400, "workflow must be 1 or 2")
        return _mutate(data, lambda: {"report":
                                      project.run_split(workflow=wf)})

    @app.get("/cladding")
    def get_cladding(patch: int, samples: int = 65):
        if patch not in project.cladding:
            return _error(404, f"no cladding for patch {patch}")
        entry = project.cladding[patch]
        u = np.linspace(0.0, 1.0, max(2, samples))
        out = {"alpha": float(entry["planar"].alpha),
               "planar_corners": entry["planar"].corners.tolist(),
               "revision": project.revision}
        for f in ("u", "v"):
            phi = entry[f]
            out[f] = {"u1": u.tolist(),
                      "u2": [phi(x) for x in u],
                      "slope_min": phi.slope_min,
                      "slope_max": phi.slope_max,
                      "k_min": project.config["k_min"],
                      "k_max": project.config["k_max"]}
        return out

    @app.post("/alpha")
    async def post_alpha(request: Request):
        data = await _body(request)
        override = data.get("alpha")
        if override is not None:
            if not isinstance(override, dict):
                return _error(400, "alpha must map patch id to radians")
            override = {int(k): float(v) for k, v in override.items()}
            missing = [k for k in override
                       if project.network is None
                       or k >= len(project.network.patches)]
            if missing:
                return _error(404, f"unknown patch ids {missing}")
        return _mutate(data, lambda: {
            "report": project.run_layout(alpha_override=override)})

    @app.post("/members")
    async def post_members(request: Request):
        data = await _body(request)
        weights = data.get("weights")
        if weights is not None:
            weights = {f: {int(k): float(v) for k, v in d.items()}
                       for f, d in weights.items()}

        def run():
            out = {"report": project.run_members(
                count_u=data.get("count_u"), count_v=data.get("count_v"),
                weights=weights)}
            out["objective"] = {
                f: _objective(project, f) for f in ("u", "v")}
            return out
        return _mutate(data, run)

    @app.get("/members")
    def get_members():
        if not project.members:
            return _error(404, "members not distributed yet")
        out = {"revision": project.revision}
        for f, ms in project.members.items():
            out[f] = {"boundaries": [
                {"key": b.key, "length": b.length, "weight": b.weight,
                 "coords": b.coords.tolist()} for b in ms.boundaries],
                "objective": _objective(project, f)}
        return out

    @app.get("/layout")
    def get_layout(patch: int):
        if not project.layouts:
            return _error(404, "layouts not built yet")
        if patch < 0 or patch >= len(project.layouts):
            return _error(404, f"unknown patch {patch}")
        # same canonical artifact the CLI exports, plus the revision
        out = json.loads(export_json(project.layouts[patch]))
        out["revision"] = project.revision
        return out

    @app.post("/layouts/build")
    async def post_layouts(request: Request):
        data = await _body(request)
        return _mutate(data, lambda: {
            "patches": len(project.run_build_layouts())})

    @app.post("/simulate")
    async def post_simulate(request: Request):
        data = await _body(request)
        material = data.get("material")
        if material is not None and material not in MATERIALS:
            return _error(404, f"unknown material {material!r}")
        return _mutate(data, lambda: {"sim": project.run_simulate(
            gravity=bool(data.get("gravity", False)),
            scale=float(data.get("scale", 1.0)), material=material)})

    @app.get("/sim")
    def get_sim():
        if project.sim is None:
            return _error(404, "no simulation result")
        out = dict(project.sim)
        out["revision"] = project.revision
        return out

    return app


def _objective(project, family):
    """Eq.-(3) objective of the current member coordinates."""
    from .members import objective_eval

    return float(objective_eval(project.members[family]))
