/**
 * Client-side pick resolution: ray-cast against the mesh triangles and
 * return the hit as a (face, barycentric) record.  The core stays
 * authoritative - picks are only snapped here, never evaluated.
 */
import type { SurfacePick } from "./api";

export type Vec3 = [number, number, number];

const EPS = 1e-12;

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export interface RayHit {
  t: number;
  bary: [number, number, number];
}

/**
 * Moller-Trumbore ray/triangle intersection.  Returns the ray parameter and
 * barycentric weights (w0, w1, w2) of the hit for vertices (v0, v1, v2), or
 * null for a miss / back-side graze outside the triangle.
 */
export function rayTriangle(
  origin: Vec3,
  dir: Vec3,
  v0: Vec3,
  v1: Vec3,
  v2: Vec3,
): RayHit | null {
  const e1 = sub(v1, v0);
  const e2 = sub(v2, v0);
  const p = cross(dir, e2);
  const det = dot(e1, p);
  if (Math.abs(det) < EPS) {
    return null;
  }
  const inv = 1.0 / det;
  const s = sub(origin, v0);
  const u = dot(s, p) * inv;
  if (u < -1e-9 || u > 1 + 1e-9) {
    return null;
  }
  const q = cross(s, e1);
  const v = dot(dir, q) * inv;
  if (v < -1e-9 || u + v > 1 + 1e-9) {
    return null;
  }
  const t = dot(e2, q) * inv;
  if (t <= EPS) {
    return null;
  }
  const w1 = Math.min(1, Math.max(0, u));
  const w2 = Math.min(1, Math.max(0, v));
  return { t, bary: [Math.max(0, 1 - w1 - w2), w1, w2] };
}

/**
 * Nearest pick along a ray over the whole mesh.  Linear scan - design
 * meshes are tens of thousands of faces and picks are interactive-rate.
 */
export function pickSurfacePoint(
  origin: Vec3,
  dir: Vec3,
  vertices: number[][],
  faces: number[][],
): SurfacePick | null {
  let best: { face: number; hit: RayHit } | null = null;
  for (let f = 0; f < faces.length; f++) {
    const [a, b, c] = faces[f];
    const hit = rayTriangle(
      origin,
      dir,
      vertices[a] as Vec3,
      vertices[b] as Vec3,
      vertices[c] as Vec3,
    );
    if (hit !== null && (best === null || hit.t < best.hit.t)) {
      best = { face: f, hit };
    }
  }
  if (best === null) {
    return null;
  }
  return [best.face, best.hit.bary];
}

/** 3D position of a pick, for coincidence checks and marker rendering. */
export function pickPosition(
  pick: SurfacePick,
  vertices: number[][],
  faces: number[][],
): Vec3 {
  const [f, bary] = pick;
  const [a, b, c] = faces[f];
  const out: Vec3 = [0, 0, 0];
  for (let k = 0; k < 3; k++) {
    out[k] =
      bary[0] * vertices[a][k] +
      bary[1] * vertices[b][k] +
      bary[2] * vertices[c][k];
  }
  return out;
}

/** Two picks count as coincident below this fraction of the scene size. */
export function picksCoincident(
  a: SurfacePick,
  b: SurfacePick,
  vertices: number[][],
  faces: number[][],
  sceneDiameter: number,
): boolean {
  const pa = pickPosition(a, vertices, faces);
  const pb = pickPosition(b, vertices, faces);
  const d = Math.sqrt(dot(sub(pa, pb), sub(pa, pb)));
  return d < 1e-3 * sceneDiameter;
}
