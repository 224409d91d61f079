"""Project state: the pipeline artifacts, a revision counter and a shared
JSON serialization path used by both the CLI and the HTTP service."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .curvature import gaussian_curvature
from .geodesics import GraphDistance
from .gridexport import (
    PlanarLayout,
    build_planar_layout,
    compute_notches,
    export_json,
    export_svg,
    extract_supports,
)
from .members import MemberSet, Boundary, build_chains, distribute_members
from .mesh import GeodesicPolyline, MeshError, SurfacePoint, TriMesh, \
    dump_mesh_obj, load_mesh
from .patchlayout import (
    BoundaryParam,
    CladdingFunction,
    GeodesicQuad,
    PatchError,
    build_geodesic_quad,
    construct_planar_quad,
    diagonal_check,
    feasible_alpha_interval,
    intersect_distance_maps,
    optimize_alpha,
    planar_distance_map,
    surface_distance_map,
)
from .sim import (
    BIRCH_PLYWOOD,
    LIMEWOOD,
    POPLAR_PLYWOOD,
    assemble_network,
    material_study,
    nrmse,
    scaling_study,
    solve_equilibrium,
)
from .splitting import (
    PatchNetwork,
    eta_check,
    injectivity_bound,
    workflow1,
    workflow2,
)

PROJECT_SCHEMA = "eggrid-project/1"

MATERIALS = {m.name: m for m in (LIMEWOOD, BIRCH_PLYWOOD, POPLAR_PLYWOOD)}

DEFAULT_CONFIG = {
    "eta_max": 1.0015,
    "k_min": 0.2,
    "k_max": 5.0,
    "width": 0.05,
    "thickness": 0.01,
    "material": "limewood",
    "screw_diameter": 0.004,
    "count_u": 5,
    "count_v": 5,
    "n_edges": 20,
    "tol_len_scale": 1e-6,
}

# artifact dependency order used for staleness flags
ARTIFACTS = ("network", "cladding", "members", "layouts", "sim")


class ProjectError(PatchError):
    pass


def json_default(obj):
    """Fold numpy scalars/arrays into plain JSON types."""
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _sp_to_list(sp):
    return [int(sp.face), [float(b) for b in sp.bary]]


def _sp_from_list(d):
    return SurfacePoint(int(d[0]), tuple(float(b) for b in d[1]))


def _quad_to_dict(quad):
    return {
        "corners": [_sp_to_list(c) for c in quad.corners],
        "boundaries": [{"points": [_sp_to_list(p) for p in b.points],
                        "length": b.length} for b in quad.boundaries],
    }


def _quad_from_dict(mesh, d):
    corners = [_sp_from_list(c) for c in d["corners"]]
    boundaries = [GeodesicPolyline([_sp_from_list(p) for p in b["points"]],
                                   b["length"]) for b in d["boundaries"]]
    quad = GeodesicQuad(corners, boundaries)
    quad.params = [BoundaryParam(mesh, b) for b in boundaries]
    return quad


@dataclass
class Project:
    mesh: TriMesh = None
    mesh_path: str = None
    config: dict = field(default_factory=lambda: dict(DEFAULT_CONFIG))
    revision: int = 0
    network: PatchNetwork = None
    cladding: dict = field(default_factory=dict)   # pid -> layout data
    members: dict = field(default_factory=dict)    # family -> MemberSet
    layouts: list = field(default_factory=list)
    sim: dict = None
    reports: dict = field(default_factory=dict)    # diagnostics per stage
    stamps: dict = field(default_factory=dict)     # artifact -> revision

    # -- revision plumbing -------------------------------------------------

    def _bump(self, artifact=None):
        self.revision += 1
        if artifact is not None:
            self.stamps[artifact] = self.revision

    def stale(self):
        """Artifacts whose inputs were recomputed after them."""
        out = []
        newest = 0
        for name in ARTIFACTS:
            if name not in self.stamps:
                continue
            if self.stamps[name] < newest:
                out.append(name)
            newest = max(newest, self.stamps[name])
        return out

    def _require(self, artifact):
        if artifact not in self.stamps:
            raise ProjectError(f"run the {artifact} stage first")

    @property
    def tol_len(self):
        if self.mesh is None or self.network is None:
            return None
        return self.config["tol_len_scale"] * max(
            q.diameter(self.mesh) for q in self.network.patches)

    # -- stages --------------------------------------------------------------

    def load_mesh_file(self, path):
        with open(path, "rb") as fh:
            self.mesh = load_mesh(fh.read())
        self.mesh_path = os.path.abspath(path)
        self._bump()

    def set_mesh(self, mesh, path=None):
        self.mesh = mesh
        self.mesh_path = path
        self._bump()

    def analyze(self):
        if self.mesh is None:
            raise ProjectError("no mesh loaded")
        K = gaussian_curvature(self.mesh).values
        interior = ~self.mesh.boundary_vertices
        k_int = K[interior] if interior.any() else K
        k_max = float(k_int.max())
        r = injectivity_bound(self.mesh)
        flat = not np.isfinite(r)
        hot = []
        if not flat:
            thr = 0.5 * k_max
            for v in np.where((K > thr) & interior)[0]:
                hot.append({"vertex": int(v),
                            "position": [float(x) for x in
                                         self.mesh.vertices[v]],
                            "K": float(K[v])})
            hot.sort(key=lambda h: -h["K"])
        return {"K_min": float(k_int.min()), "K_max": k_max,
                "K_mean": float(k_int.mean()),
                "injectivity_bound": None if flat else r,
                "unbounded": flat,
                "hotspots": hot[:16],
                "vertices": int(len(self.mesh.vertices)),
                "faces": int(len(self.mesh.faces))}

    def set_corners(self, corners):
        """Single designer patch from 4 points (3D positions or
        SurfacePoints)."""
        if self.mesh is None:
            raise ProjectError("no mesh loaded")
        sps = [c if isinstance(c, SurfacePoint)
               else self.mesh.surface_point_near(np.asarray(c, float))
               for c in corners]
        quad = build_geodesic_quad(self.mesh, sps)
        self.network = PatchNetwork([quad])
        report = diagonal_check(self.mesh, quad)
        etas = {f: eta_check(self.mesh, quad, f).to_dict()
                for f in ("u", "v")}
        self.reports["patch"] = {"diagonal": dataclasses.asdict(report),
                                 "eta": etas}
        self.cladding = {}
        self.members = {}
        self.layouts = []
        self.sim = None
        for name in ("cladding", "members", "layouts", "sim"):
            self.stamps.pop(name, None)
        self._bump("network")
        return self.reports["patch"]

    def run_split(self, workflow=1):
        if self.mesh is None:
            raise ProjectError("no mesh loaded")
        cfg = self.config
        if workflow == 1:
            if self.network is None or not self.network.patches:
                raise ProjectError("workflow 1 needs an initial patch; run "
                                   "the patch stage first")
            self.network = workflow1(self.mesh, self.network,
                                     eta_max=cfg["eta_max"],
                                     k_min=cfg["k_min"], k_max=cfg["k_max"])
        elif workflow == 2:
            self.network = workflow2(self.mesh, params={
                "eta_max": cfg["eta_max"], "k_min": cfg["k_min"],
                "k_max": cfg["k_max"]})
        else:
            raise ProjectError(f"unknown workflow {workflow!r}")
        self.reports["split"] = {
            "patches": len(self.network.patches),
            "shared": len(self.network.shared),
            "eta": [{f: eta_check(self.mesh, q, f).to_dict()
                     for f in ("u", "v")} for q in self.network.patches],
        }
        self._bump("network")
        return self.reports["split"]

    def run_layout(self, alpha_override=None):
        """Per-patch alpha optimization and cladding functions.

        alpha_override: {patch id: alpha} fixes the planar angle instead of
        optimizing it.
        """
        if self.network is None or not self.network.patches:
            raise ProjectError("no patch network; run patch or split first")
        cfg = self.config
        self.cladding = {}
        diags = {}
        for pid, quad in enumerate(self.network.patches):
            if alpha_override and pid in alpha_override:
                alpha = float(alpha_override[pid])
                lengths = quad.side_lengths()
                lo, hi = feasible_alpha_interval(lengths)
                if not (lo <= alpha <= hi):
                    raise PatchError(
                        f"alpha {alpha:.4f} outside feasible interval "
                        f"[{lo:.4f}, {hi:.4f}] for patch {pid}")
                planar = construct_planar_quad(lengths, alpha)
                tol = cfg["tol_len_scale"] * quad.diameter(self.mesh)
                phis = {}
                for f in ("u", "v"):
                    dmap = surface_distance_map(self.mesh, quad, f)
                    phis[f] = intersect_distance_maps(
                        dmap, planar_distance_map(planar, f), self.mesh, tol)
                phi_u, phi_v = phis["u"], phis["v"]
            else:
                planar, phi_u, phi_v = optimize_alpha(
                    self.mesh, quad, k_min=cfg["k_min"], k_max=cfg["k_max"])
            self.cladding[pid] = {"planar": planar, "u": phi_u, "v": phi_v}
            diags[pid] = {
                "alpha": float(planar.alpha),
                "slopes": {f: [p.slope_min, p.slope_max]
                           for f, p in (("u", phi_u), ("v", phi_v))},
            }
        self.reports["layout"] = diags
        self._bump("cladding")
        return diags

    def run_members(self, count_u=None, count_v=None, weights=None,
                    fixed=None):
        self._require("cladding")
        counts = {"u": count_u or self.config["count_u"],
                  "v": count_v or self.config["count_v"]}
        self.members = {}
        for f in ("u", "v"):
            clads = {pid: d[f] for pid, d in self.cladding.items()}
            self.members[f] = distribute_members(
                self.network, self.mesh, clads, f, counts[f],
                weights=weights.get(f) if weights else None,
                fixed=fixed.get(f) if fixed else None)
        self._bump("members")
        self.reports["members"] = {
            f: {"count": counts[f],
                "boundaries": len(self.members[f].boundaries)}
            for f in ("u", "v")}
        return self.reports["members"]

    def run_build_layouts(self):
        self._require("members")
        cfg = self.config
        self.layouts = build_planar_layout(
            self.network, self.members, self.cladding,
            cfg["width"], cfg["thickness"], mesh=self.mesh)
        for pid, layout in enumerate(self.layouts):
            compute_notches(self.mesh, self.network.patches[pid], layout,
                            screw_diameter=cfg["screw_diameter"])
        self._bump("layouts")
        return self.layouts

    def run_simulate(self, gravity=False, scale=1.0, material=None):
        if not self.layouts:
            self.run_build_layouts()
        mat = MATERIALS[material or self.config["material"]]
        cfg = self.config
        results = []
        for pid, layout in enumerate(self.layouts):
            net = assemble_network(self.mesh, self.network.patches[pid],
                                   layout, mat, cfg["width"],
                                   cfg["thickness"], f=scale,
                                   gravity=gravity,
                                   n_edges=cfg["n_edges"])
            result = solve_equilibrium(net)
            result.nrmse = nrmse(result.positions, self.mesh, scale)
            results.append(result)
        self.sim = {
            "gravity": gravity, "scale": scale, "material": mat.name,
            "patches": [r.to_dict() for r in results],
        }
        self._bump("sim")
        return self.sim

    def run_study(self, kind, factors=(1.0, 2.0, 4.0), scale=5.0,
                  gravity=True, material=None):
        if not self.layouts:
            self.run_build_layouts()
        mat = MATERIALS[material or self.config["material"]]
        cfg = self.config
        quad = self.network.patches[0]
        layout = self.layouts[0]
        if kind == "scaling":
            return scaling_study(self.mesh, quad, layout, mat,
                                 cfg["width"], cfg["thickness"],
                                 list(factors), gravity=gravity,
                                 n_edges=cfg["n_edges"])
        if kind == "material":
            return material_study(self.mesh, quad, layout,
                                  list(MATERIALS.values()), scale,
                                  cfg["width"], cfg["thickness"],
                                  n_edges=cfg["n_edges"])
        raise ProjectError(f"unknown study {kind!r}")

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        d = {
            "schema": PROJECT_SCHEMA,
            "revision": self.revision,
            "config": self.config,
            "stamps": self.stamps,
            "mesh_path": self.mesh_path,
            "reports": self.reports,
        }
        if self.network is not None:
            d["network"] = {
                "patches": [_quad_to_dict(q) for q in self.network.patches],
                "shared": [[list(a), list(b), bool(fl)]
                           for a, b, fl in self.network.shared],
                "final": self.network.final,
            }
        if self.cladding:
            d["cladding"] = {
                str(pid): {
                    "alpha": float(c["planar"].alpha),
                    "lengths": [float(x) for x in c["planar"].lengths],
                    "knots": {f: [c[f].u1.tolist(), c[f].u2.tolist()]
                              for f in ("u", "v")},
                } for pid, c in self.cladding.items()}
        if self.members:
            d["members"] = {
                f: {"source": list(ms.source),
                    "boundaries": [
                        {"key": list(b.key), "length": b.length,
                         "weight": b.weight, "coords": b.coords.tolist(),
                         "fixed": {str(k): v for k, v in b.fixed.items()}}
                        for b in ms.boundaries]}
                for f, ms in self.members.items()}
        if self.layouts:
            d["layouts"] = [l.to_dict() for l in self.layouts]
        if self.sim is not None:
            d["sim"] = self.sim
        return d

    def dumps(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"),
                          default=json_default).encode()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, d, mesh=None):
        if d.get("schema") != PROJECT_SCHEMA:
            raise ProjectError(
                f"unsupported project schema {d.get('schema')!r}")
        proj = cls()
        proj.revision = d["revision"]
        proj.config = dict(DEFAULT_CONFIG)
        proj.config.update(d.get("config", {}))
        proj.stamps = {k: int(v) for k, v in d.get("stamps", {}).items()}
        proj.reports = d.get("reports", {})
        proj.mesh_path = d.get("mesh_path")
        if mesh is not None:
            proj.mesh = mesh
        elif proj.mesh_path:
            with open(proj.mesh_path, "rb") as fh:
                proj.mesh = load_mesh(fh.read())
        if "network" in d:
            net = PatchNetwork(
                [_quad_from_dict(proj.mesh, q) for q in
                 d["network"]["patches"]],
                [(tuple(a), tuple(b), fl) for a, b, fl in
                 d["network"]["shared"]],
                d["network"]["final"])
            proj.network = net
        if "cladding" in d:
            for pid_s, c in d["cladding"].items():
                planar = construct_planar_quad(c["lengths"], c["alpha"])
                entry = {"planar": planar}
                for f in ("u", "v"):
                    u1, u2 = c["knots"][f]
                    entry[f] = CladdingFunction(f, u1, u2)
                proj.cladding[int(pid_s)] = entry
        if "members" in d:
            for f, md in d["members"].items():
                boundaries = [
                    Boundary(tuple(b["key"]), b["length"], b["weight"],
                             np.asarray(b["coords"]),
                             {int(k): v for k, v in b["fixed"].items()})
                    for b in md["boundaries"]]
                clads = {pid: proj.cladding[pid][f] for pid in proj.cladding}
                chains = build_chains(proj.network, clads, f)
                proj.members[f] = MemberSet(f, boundaries, chains,
                                            tuple(md["source"]))
        if "layouts" in d:
            proj.layouts = [PlanarLayout.from_dict(x) for x in d["layouts"]]
        proj.sim = d.get("sim")
        return proj

    @classmethod
    def load(cls, path, mesh=None):
        with open(path, "rb") as fh:
            return cls.from_dict(json.loads(fh.read().decode()), mesh=mesh)
