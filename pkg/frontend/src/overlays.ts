/**
 * Vertex-color overlays: scalar fields from the core mapped to RGB.
 * Pure array math so the scene module can feed them straight into a
 * color buffer attribute.
 */

export type Overlay =
  | "none"
  | "curvature"
  | "distance"
  | "eta-hotspots"
  | "deviations";

/** blue -> white -> red diverging map centred on zero */
export function divergingColor(x: number): [number, number, number] {
  const t = Math.max(-1, Math.min(1, x));
  if (t < 0) {
    return [1 + t, 1 + t, 1];
  }
  return [1, 1 - t, 1 - t];
}

/** dark -> yellow sequential map on [0, 1] */
export function sequentialColor(t: number): [number, number, number] {
  const s = Math.max(0, Math.min(1, t));
  return [0.15 + 0.85 * s, 0.1 + 0.8 * s, 0.3 * (1 - s)];
}

/**
 * Scalar field to a flat RGB buffer.  Symmetric normalization for signed
 * fields (curvature), max-normalization otherwise.
 */
export function fieldColors(values: number[], signed: boolean): Float32Array {
  const out = new Float32Array(values.length * 3);
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }
  const span = signed
    ? Math.max(Math.abs(lo), Math.abs(hi), 1e-30)
    : Math.max(hi - lo, 1e-30);
  for (let i = 0; i < values.length; i++) {
    const c = signed
      ? divergingColor(values[i] / span)
      : sequentialColor((values[i] - lo) / span);
    out[3 * i] = c[0];
    out[3 * i + 1] = c[1];
    out[3 * i + 2] = c[2];
  }
  return out;
}
