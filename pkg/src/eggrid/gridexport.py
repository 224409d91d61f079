"""Fabrication export: planar lamella geometry, sliding notches, supports,
and JSON/SVG serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geodesics import shortest_geodesic
from .patchlayout import FAMILY_SIDES, PatchError, planar_distance_map

SCHEMA_VERSION = "eggrid-layout/1"

# fastener geometry (paper is silent; clearance scaled off the screw)
DEFAULT_SCREW_DIAMETER = 0.004      # m
SLOT_WIDTH_PAD = 0.0002             # m, slot width = screw + 0.2 mm
CLEARANCE_FACTOR = 1.1              # clearance = 1.1 x screw diameter


class ExportError(PatchError):
    pass


# -------------------------------------------------------------------------
# Data model


@dataclass
class NotchSpec:
    """Elongated hole along the host centerline around arc length s0."""
    s0: float
    d_minus: float
    d_plus: float
    kind: str = "sliding"           # "sliding" | "plain"

    @property
    def extent(self):
        return self.d_minus + self.d_plus

    def to_dict(self):
        return {"s0": self.s0, "d_minus": self.d_minus,
                "d_plus": self.d_plus, "kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        return cls(d["s0"], d["d_minus"], d["d_plus"], d["kind"])


@dataclass
class Lamella:
    family: str                     # "u" | "v"
    index: int                      # member index within the family
    p0: np.ndarray                  # planar centerline start (2,)
    p1: np.ndarray                  # planar centerline end (2,)
    width: float
    thickness: float
    coord_in: float                 # boundary coordinate on the start side
    coord_out: float                # cladding image on the end side
    boundary: bool = False

    @property
    def length(self):
        return float(np.linalg.norm(self.p1 - self.p0))

    def to_dict(self):
        return {"family": self.family, "index": self.index,
                "p0": [float(self.p0[0]), float(self.p0[1])],
                "p1": [float(self.p1[0]), float(self.p1[1])],
                "width": self.width, "thickness": self.thickness,
                "coord_in": self.coord_in, "coord_out": self.coord_out,
                "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], d["index"], np.array(d["p0"]),
                   np.array(d["p1"]), d["width"], d["thickness"],
                   d["coord_in"], d["coord_out"], d["boundary"])


@dataclass
class Connection:
    host: int                       # lamella list index
    guest: int
    s_host: float                   # planar arc length on the host
    s_guest: float
    notch: NotchSpec = None

    def to_dict(self):
        return {"host": self.host, "guest": self.guest,
                "s_host": self.s_host, "s_guest": self.s_guest,
                "notch": self.notch.to_dict() if self.notch else None}

    @classmethod
    def from_dict(cls, d):
        n = NotchSpec.from_dict(d["notch"]) if d["notch"] else None
        return cls(d["host"], d["guest"], d["s_host"], d["s_guest"], n)


@dataclass
class SupportSpec:
    point: np.ndarray               # 3D position on the boundary
    normal: np.ndarray              # surface normal (unit)
    tangent: np.ndarray             # member tangent (unit, in-plane)

    def to_dict(self):
        return {"point": [float(x) for x in self.point],
                "normal": [float(x) for x in self.normal],
                "tangent": [float(x) for x in self.tangent]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["point"]), np.array(d["normal"]),
                   np.array(d["tangent"]))


@dataclass
class PlanarLayout:
    patch: int
    lamellae: list = field(default_factory=list)
    connections: list = field(default_factory=list)
    width: float = 0.05
    thickness: float = 0.01

    def to_dict(self):
        return {"patch": self.patch,
                "lamellae": [l.to_dict() for l in self.lamellae],
                "connections": [c.to_dict() for c in self.connections],
                "width": self.width, "thickness": self.thickness}

    @classmethod
    def from_dict(cls, d):
        return cls(d["patch"],
                   [Lamella.from_dict(x) for x in d["lamellae"]],
                   [Connection.from_dict(x) for x in d["connections"]],
                   d["width"], d["thickness"])


# -------------------------------------------------------------------------
# Planar layout construction


def _family_coords(member_set, patch_id):
    """Local (patch-oriented) boundary coordinates on the family's first
    side of the patch."""
    for ch in member_set.chains:
        if patch_id in ch.patches:
            k = ch.patches.index(patch_id)
            coords = np.asarray(member_set.coords_of(ch.boundaries[k]), float)
            if ch.flips[k][0]:
                coords = np.sort(1.0 - coords)
            return coords
    raise ExportError(f"patch {patch_id} is not part of any member chain")


def _side_point(planar, family, which, t):
    c = planar.corners
    if family == "u":
        a0, a1 = (c[0], c[1]) if which == "in" else (c[3], c[2])
    else:
        a0, a1 = (c[0], c[3]) if which == "in" else (c[1], c[2])
    return a0 + float(t) * (a1 - a0)


def _member_segments(planar, phi, coords, family):
    """Planar centerline segments for one family of members."""
    c = planar.corners
    if family == "u":
        a0, a1 = c[0], c[1]         # side 0
        b0, b1 = c[3], c[2]         # side 2
    else:
        a0, a1 = c[0], c[3]         # side 3
        b0, b1 = c[1], c[2]         # side 1
    segs = []
    for u in coords:
        w = phi(float(u))
        p0 = a0 + float(u) * (a1 - a0)
        p1 = b0 + w * (b1 - b0)
        segs.append((float(u), w, p0, p1))
    return segs


def _segment_intersection(p0, p1, q0, q1):
    """Parameters (s, t) with p0+s(p1-p0) == q0+t(q1-q0), or None."""
    r = p1 - p0
    s = q1 - q0
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-14:
        return None
    d = q0 - p0
    a = (d[0] * s[1] - d[1] * s[0]) / denom
    b = (d[0] * r[1] - d[1] * r[0]) / denom
    eps = 1e-9
    if -eps <= a <= 1 + eps and -eps <= b <= 1 + eps:
        return float(a), float(b)
    return None


def _refine_out_coord(mesh, quad, planar, family, u, w0, tol):
    """Sharpen the cladding image so the planar member length matches the
    surface geodesic length within tol (condition (i) at emission)."""
    sa, sb = FAMILY_SIDES[family]
    a = quad.params[sa].at(u)
    plan = planar_distance_map(planar, family)

    def g(w):
        surf = shortest_geodesic(mesh, a, quad.params[sb].at(w)).length
        return surf - float(plan(u, w))

    w1, g1 = w0, g(w0)
    if abs(g1) <= tol:
        return w1
    w2 = min(max(w1 + (1e-3 if w1 < 0.5 else -1e-3), 0.0), 1.0)
    g2 = g(w2)
    for _ in range(20):
        if abs(g2) <= tol or g2 == g1:
            break
        step = g2 * (w2 - w1) / (g2 - g1)
        w1, g1 = w2, g2
        w2 = min(max(w2 - step, 0.0), 1.0)
        g2 = g(w2)
    return w2


def build_planar_layout(network, members, cladding, width, thickness,
                        mesh=None):
    """One PlanarLayout per patch.

    members: {"u": MemberSet, "v": MemberSet}
    cladding: {patch id: {"planar": PlanarQuad, "u": phi_u, "v": phi_v}}
    With a mesh, member endpoints are re-solved against straightened
    geodesic lengths so condition (i) holds exactly at emission.
    """
    if thickness <= 0 or width <= 0:
        raise ExportError("width and thickness must be positive")
    if width / thickness < 5.0:
        raise ExportError(
            f"width/thickness ratio {width / thickness:.2f} below 5")
    layouts = []
    for pid in range(len(network.patches)):
        data = cladding[pid]
        planar = data["planar"]
        quad = network.patches[pid]
        layout = PlanarLayout(pid, width=width, thickness=thickness)
        fam_segments = {}
        for fam in ("u", "v"):
            coords = _family_coords(members[fam], pid)
            segs = _member_segments(planar, data[fam], coords, fam)
            if mesh is not None:
                tol = 0.5e-6 * quad.diameter(mesh)
                refined = []
                for (u, w, p0, p1) in segs:
                    if u <= 1e-12 or u >= 1 - 1e-12:
                        w = round(u)
                    else:
                        w = _refine_out_coord(mesh, quad, planar, fam,
                                              u, w, tol)
                    refined.append((u, w, p0,
                                    _side_point(planar, fam, "out", w)))
                segs = refined
            fam_segments[fam] = segs
            for i, (u, w, p0, p1) in enumerate(segs):
                edge = u <= 1e-12 or u >= 1 - 1e-12
                layout.lamellae.append(
                    Lamella(fam, i, p0, p1, width, thickness, u, w,
                            boundary=edge))
        nu = len(fam_segments["u"])
        for i, (u, wu, p0, p1) in enumerate(fam_segments["u"]):
            for j, (v, wv, q0, q1) in enumerate(fam_segments["v"]):
                hit = _segment_intersection(p0, p1, q0, q1)
                if hit is None:
                    continue
                a, b = hit
                host, guest = i, nu + j
                s_host = a * float(np.linalg.norm(p1 - p0))
                s_guest = b * float(np.linalg.norm(q1 - q0))
                if layout.lamellae[host].boundary and \
                        not layout.lamellae[guest].boundary:
                    # boundary members carry no notches: swap roles
                    host, guest = guest, host
                    s_host, s_guest = s_guest, s_host
                layout.connections.append(
                    Connection(host, guest, s_host, s_guest))
        _check_concurrency(layout)
        layouts.append(layout)
    return layouts


def _check_concurrency(layout, tol=1e-9):
    by_host = {}
    for c in layout.connections:
        by_host.setdefault(c.host, []).append(c.s_host)
    for host, ss in by_host.items():
        ss = np.sort(ss)
        if len(ss) > 1 and np.min(np.diff(ss)) < tol:
            raise ExportError(
                f"three members concurrent on lamella {host}")


def surface_member_polyline(mesh, quad, lam):
    """Surface geodesic realizing a lamella."""
    sa, sb = FAMILY_SIDES[lam.family]
    a = quad.params[sa].at(lam.coord_in)
    b = quad.params[sb].at(lam.coord_out)
    return shortest_geodesic(mesh, a, b)


def audit_layout(mesh, quad, layout, tol=None):
    """Condition (i) re-audit: planar lamella lengths against independent
    surface geodesic lengths.  Returns the worst mismatch."""
    if tol is None:
        tol = 1e-6 * quad.diameter(mesh)
    worst = 0.0
    for lam in layout.lamellae:
        poly = surface_member_polyline(mesh, quad, lam)
        worst = max(worst, abs(poly.length - lam.length))
    if worst > tol:
        raise ExportError(
            f"member length mismatch {worst:.3e} exceeds tolerance {tol:.3e}")
    return worst


# -------------------------------------------------------------------------
# Notches


def _polyline_arclength(pos):
    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _closest_approach(pos_a, cum_a, pos_b):
    """Arc length on polyline a of the closest approach to polyline b."""
    d = np.linalg.norm(pos_a[:, None, :] - pos_b[None, :, :], axis=2)
    i, j = np.unravel_index(int(np.argmin(d)), d.shape)
    # refine on the two local segments
    best = (float(d[i, j]), float(cum_a[i]))
    for ia in (max(i - 1, 0), min(i, len(pos_a) - 2)):
        for jb in (max(j - 1, 0), min(j, len(pos_b) - 2)):
            res = _segment_closest(pos_a[ia], pos_a[ia + 1],
                                   pos_b[jb], pos_b[jb + 1])
            if res is None:
                continue
            dist, s = res
            if dist < best[0]:
                seg = float(np.linalg.norm(pos_a[ia + 1] - pos_a[ia]))
                best = (dist, float(cum_a[ia]) + s * seg)
    return best


def _segment_closest(a0, a1, b0, b1):
    """(distance, param on a) of the closest points of two 3D segments."""
    u = a1 - a0
    v = b1 - b0
    w = a0 - b0
    A, B, C = u @ u, u @ v, v @ v
    D, E = u @ w, v @ w
    den = A * C - B * B
    if den < 1e-18:
        return None
    s = np.clip((B * E - C * D) / den, 0.0, 1.0)
    t = np.clip((A * E - B * D) / den, 0.0, 1.0)
    p = a0 + s * u
    q = b0 + t * v
    return float(np.linalg.norm(p - q)), float(s)


def compute_notches(mesh, quad, layout, screw_diameter=DEFAULT_SCREW_DIAMETER):
    """Attach a NotchSpec to every connection.

    Interior connections receive a sliding slot covering the difference
    between the planar and surface arc-length positions plus clearance;
    connections on boundary members get plain holes.
    """
    clearance = CLEARANCE_FACTOR * screw_diameter
    polylines = []
    for lam in layout.lamellae:
        poly = surface_member_polyline(mesh, quad, lam)
        pos = poly.positions(mesh)
        polylines.append((pos, _polyline_arclength(pos)))
    gap_tol = 2.0 * mesh.edge_lengths_mean
    for con in layout.connections:
        host = layout.lamellae[con.host]
        guest = layout.lamellae[con.guest]
        if host.boundary or guest.boundary:
            con.notch = NotchSpec(con.s_host, 0.0, 0.0, kind="plain")
            continue
        pos_h, cum_h = polylines[con.host]
        pos_g, _ = polylines[con.guest]
        dist, s_surface = _closest_approach(pos_h, cum_h, pos_g)
        if dist > gap_tol:
            raise ExportError(
                "no surface intersection for a planar connection "
                f"(host {con.host}, guest {con.guest})")
        slide = s_surface - con.s_host
        if slide >= 0:
            notch = NotchSpec(con.s_host, clearance, slide + clearance)
        else:
            notch = NotchSpec(con.s_host, -slide + clearance, clearance)
        con.notch = notch
    return layout


# -------------------------------------------------------------------------
# Supports


def extract_supports(mesh, quad, layout, selection=None):
    """SupportSpec at boundary intersections: member start points on the
    patch boundary, with the surface tangent plane."""
    supports = []
    for lam in layout.lamellae:
        if lam.boundary:
            continue
        poly = surface_member_polyline(mesh, quad, lam)
        pos = poly.positions(mesh)
        for pt, nxt in ((poly.points[0], pos[min(1, len(pos) - 1)]),
                        (poly.points[-1], pos[max(-2, -len(pos))])):
            p = mesh.point(pt)
            # interpolated vertex normals; facet normals are too coarse
            n = sum(b * mesh.vertex_normal(int(v)) for b, v in
                    zip(pt.bary, mesh.faces[pt.face]))
            tang = nxt - p
            norm = np.linalg.norm(tang)
            if norm < 1e-14:
                continue
            tang = tang / norm
            tang -= n * (tang @ n)
            tn = np.linalg.norm(tang)
            if tn > 1e-14:
                tang /= tn
            supports.append(SupportSpec(p, n / np.linalg.norm(n), tang))
    if selection is not None:
        supports = [supports[i] for i in selection]
    return supports


# -------------------------------------------------------------------------
# Serialization


def _canonical(payload):
    return json.dumps(payload, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def export_json(obj):
    if isinstance(obj, PlanarLayout):
        kind, data = "layout", obj.to_dict()
    elif isinstance(obj, (list, tuple)) and all(
            isinstance(x, PlanarLayout) for x in obj):
        kind, data = "layouts", [x.to_dict() for x in obj]
    elif isinstance(obj, (list, tuple)) and all(
            isinstance(x, SupportSpec) for x in obj):
        kind, data = "supports", [x.to_dict() for x in obj]
    elif isinstance(obj, dict):
        kind, data = "project", obj
    else:
        raise ExportError(f"cannot export object of type {type(obj)!r}")
    return _canonical({"schema": SCHEMA_VERSION, "kind": kind, "data": data})


def import_json(blob):
    payload = json.loads(blob.decode("utf-8") if isinstance(blob, bytes)
                         else blob)
    version = payload.get("schema")
    if version != SCHEMA_VERSION:
        raise ExportError(f"unsupported schema version {version!r}")
    kind, data = payload["kind"], payload["data"]
    if kind == "layout":
        return PlanarLayout.from_dict(data)
    if kind == "layouts":
        return [PlanarLayout.from_dict(x) for x in data]
    if kind == "supports":
        return [SupportSpec.from_dict(x) for x in data]
    if kind == "project":
        return data
    raise ExportError(f"unknown payload kind {kind!r}")


# -------------------------------------------------------------------------
# SVG


def _stadium_path(cx, cy, straight, width):
    """Slot outline: straight segment +- width/2 with semicircular caps,
    long axis along x, centered at (cx, cy).  Degenerates to a circle."""
    r = width / 2.0
    h = straight / 2.0
    x0, x1 = cx - h, cx + h
    return (f"M {x0:.6f} {cy - r:.6f} "
            f"L {x1:.6f} {cy - r:.6f} "
            f"A {r:.6f} {r:.6f} 0 0 1 {x1:.6f} {cy + r:.6f} "
            f"L {x0:.6f} {cy + r:.6f} "
            f"A {r:.6f} {r:.6f} 0 0 1 {x0:.6f} {cy - r:.6f} Z")


def _rect_path(x, y, length, width):
    return (f"M {x:.6f} {y:.6f} L {x + length:.6f} {y:.6f} "
            f"L {x + length:.6f} {y + width:.6f} L {x:.6f} {y + width:.6f} Z")


def stadium_perimeter(straight, width):
    return 2.0 * straight + math.pi * width


def rect_perimeter(length, width):
    return 2.0 * (length + width)


def export_svg(layout, screw_diameter=DEFAULT_SCREW_DIAMETER,
               sheet_width=2.0, gap=0.005):
    """Cutting plan: lamellae shelf-packed in rows by length descending,
    1 SVG unit = 1 mm."""
    slot_w = screw_diameter + SLOT_WIDTH_PAD
    order = sorted(range(len(layout.lamellae)),
                   key=lambda i: (-layout.lamellae[i].length, i))
    slots_of = {i: [] for i in range(len(layout.lamellae))}
    for con in layout.connections:
        if con.notch is not None:
            slots_of[con.host].append(con.notch)
    paths = []
    x = y = gap
    row_h = 0.0
    max_x = 0.0
    for i in order:
        lam = layout.lamellae[i]
        L, w = lam.length, lam.width
        if x + L + gap > sheet_width and x > gap:
            x = gap
            y += row_h + gap
            row_h = 0.0
        mm = 1000.0
        paths.append(_rect_path(x * mm, y * mm, L * mm, w * mm))
        for notch in slots_of[i]:
            cx = x + notch.s0 + (notch.d_plus - notch.d_minus) / 2.0
            cy = y + w / 2.0
            paths.append(_stadium_path(cx * mm, cy * mm,
                                       notch.extent * mm, slot_w * mm))
        x += L + gap
        row_h = max(row_h, w)
        max_x = max(max_x, x)
    W = max_x * 1000.0
    H = (y + row_h + gap) * 1000.0
    body = "\n".join(f'  <path d="{d}" fill="none" stroke="black" '
                     f'stroke-width="0.1"/>' for d in paths)
    svg = ('<?xml version="1.0" encoding="UTF-8"?>\n'
           f'<svg xmlns="http://www.w3.org/2000/svg" '
           f'width="{W:.3f}mm" height="{H:.3f}mm" '
           f'viewBox="0 0 {W:.3f} {H:.3f}">\n{body}\n</svg>\n')
    return svg.encode("utf-8")


def total_cut_length(layout, screw_diameter=DEFAULT_SCREW_DIAMETER):
    """Analytic cut length (m) matching export_svg's outlines."""
    slot_w = screw_diameter + SLOT_WIDTH_PAD
    total = sum(rect_perimeter(l.length, l.width) for l in layout.lamellae)
    for con in layout.connections:
        if con.notch is not None:
            total += stadium_perimeter(con.notch.extent, slot_w)
    return total


def export(obj, fmt="JSON", **kwargs):
    if fmt.upper() == "JSON":
        return export_json(obj)
    if fmt.upper() == "SVG":
        if not isinstance(obj, PlanarLayout):
            raise ExportError("SVG export expects a single PlanarLayout")
        return export_svg(obj, **kwargs)
    raise ExportError(f"unknown export format {fmt!r}")
