"""Synthetic test surfaces: flat patch, sphere cap, cylinder band, bumps, saddle."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def _grid_faces(nx, ny):
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b = a + 1
            c = a + nx
            d = c + 1
            # alternate the diagonal to avoid a directional bias
            if (i + j) % 2 == 0:
                faces += [[a, b, d], [a, d, c]]
            else:
                faces += [[a, b, c], [b, d, c]]
    return np.array(faces)


def flat_patch(nx=31, ny=31, width=1.0, height=1.0) -> TriMesh:
    xs = np.linspace(0.0, width, nx)
    ys = np.linspace(0.0, height, ny)
    X, Y = np.meshgrid(xs, ys)
    V = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    return TriMesh(V, _grid_faces(nx, ny))


def heightfield(fn, nx=41, ny=41, width=1.0, height=1.0) -> TriMesh:
    xs = np.linspace(0.0, width, nx)
    ys = np.linspace(0.0, height, ny)
    X, Y = np.meshgrid(xs, ys)
    Z = fn(X, Y)
    V = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    return TriMesh(V, _grid_faces(nx, ny))


def gaussian_bump(nx=41, ny=41, width=2.0, height=2.0, amp=0.35, sigma=0.35,
                  center=None) -> TriMesh:
    cx, cy = center if center is not None else (width / 2.0, height / 2.0)

    def fn(X, Y):
        return amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * sigma ** 2))

    return heightfield(fn, nx, ny, width, height)


def two_bumps(nx=61, ny=41, width=3.0, height=2.0, amp=0.5, sigma=0.3) -> TriMesh:
    c1 = (width * 0.3, height / 2.0)
    c2 = (width * 0.7, height / 2.0)

    def fn(X, Y):
        g1 = np.exp(-((X - c1[0]) ** 2 + (Y - c1[1]) ** 2) / (2 * sigma ** 2))
        g2 = np.exp(-((X - c2[0]) ** 2 + (Y - c2[1]) ** 2) / (2 * sigma ** 2))
        return amp * (g1 + g2)

    return heightfield(fn, nx, ny, width, height)


def saddle(nx=41, ny=41, width=2.0, height=2.0, coeff=0.5) -> TriMesh:
    def fn(X, Y):
        xc, yc = X - width / 2.0, Y - height / 2.0
        return coeff * (xc ** 2 - yc ** 2)

    return heightfield(fn, nx, ny, width, height)


def icosphere(subdivisions=4, radius=1.0) -> TriMesh:
    """Closed unit-style sphere from subdivided icosahedron."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    V = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    V /= np.linalg.norm(V, axis=1)[:, None]
    F = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [tuple(v) for v in V]
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = np.asarray(verts[i]) + np.asarray(verts[j])
            m /= np.linalg.norm(m)
            verts.append(tuple(m))
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdivisions):
        F2 = []
        for a, b, c in F:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            F2 += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = F2
    return TriMesh(radius * np.array(verts), np.array(F))


def sphere_cap(subdivisions=4, radius=1.0, max_polar=np.pi / 3) -> TriMesh:
    """Open cap of a sphere around the +z pole, polar angle <= max_polar."""
    full = icosphere(subdivisions, radius)
    zmin = radius * np.cos(max_polar)
    keep = full.vertices[:, 2] >= zmin - 1e-12
    fmask = keep[full.faces].all(axis=1)
    faces = full.faces[fmask]
    used = np.unique(faces)
    remap = -np.ones(len(full.vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(full.vertices[used], remap[faces])


def cylinder_band(n_around=96, n_along=33, radius=1.0, length=2.0,
                  angle=2 * np.pi, closed=None) -> TriMesh:
    """Open cylindrical band; a partial angle gives an unrollable patch."""
    closed = (abs(angle - 2 * np.pi) < 1e-12) if closed is None else closed
    thetas = np.linspace(0.0, angle, n_around, endpoint=not closed)
    zs = np.linspace(0.0, length, n_along)
    verts = []
    for z in zs:
        for th in thetas:
            verts.append([radius * np.cos(th), radius * np.sin(th), z])
    V = np.array(verts)
    nx = len(thetas)
    faces = []
    for j in range(n_along - 1):
        for i in range(nx if closed else nx - 1):
            a = j * nx + i
            b = j * nx + (i + 1) % nx
            c = a + nx
            d = b + nx
            faces += [[a, b, d], [a, d, c]]
    return TriMesh(V, np.array(faces))


FIXTURES = {
    "flat": flat_patch,
    "sphere": icosphere,
    "sphere_cap": sphere_cap,
    "cylinder": cylinder_band,
    "one_bump": gaussian_bump,
    "two_bumps": two_bumps,
    "saddle": saddle,
}


def make(name, **kwargs) -> TriMesh:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return FIXTURES[name](**kwargs)
