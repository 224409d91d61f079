/**
 * Display formatting.  These are the only places a number from the core is
 * rounded; everything shown in a badge goes through here so "matches CLI
 * to displayed precision" is a property of one module.
 */

export const ETA_BOUND = 1.0015;

export function formatEta(eta: number): string {
  return eta.toFixed(4);
}

/** red badge above the paper's coverage bound */
export function etaBadgeClass(eta: number, boundaryPeak = false): string {
  return eta > ETA_BOUND && !boundaryPeak ? "badge-bad" : "badge-ok";
}

export function formatSlope(s: number): string {
  return s.toFixed(3);
}

export function formatObjective(f: number): string {
  return f.toPrecision(6);
}

export function formatAlphaDeg(alphaRad: number): string {
  return ((alphaRad * 180) / Math.PI).toFixed(1) + "°";
}

export function formatNrmse(x: number): string {
  return x.toExponential(3);
}

export function formatLength(l: number): string {
  return l.toFixed(4);
}
