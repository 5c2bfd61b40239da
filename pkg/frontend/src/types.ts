// Shared domain types and the numeric limits the server enforces.
// These constants mirror the service's validation rules exactly; the client
// rejects or clamps values before they ever reach the wire.

export const N_TF = 256;

export const PHI_MAX = (85.0 * Math.PI) / 180.0;
export const PSI_MAX = Math.PI / 4.0;
export const DIST_MIN = 1.5;
export const DIST_MAX = 4.0;

export const L_MIN = 0.0;
export const L_MAX = 100.0;
export const AB_LIMIT = 110.0;

/** [azimuth, elevation, roll, distance] in radians / world units. */
export type View = [number, number, number, number];

/** Opacity transfer function sampled on the 256-bin scalar grid, in [0, 1]. */
export type OpacityTf = number[];

/** Color transfer function: three length-256 rows (L, a, b). */
export type ColorTf = [number[], number[], number[]];

export interface Rect {
    x0: number;
    y0: number;
    x1: number;
    y1: number;
}

export function rectArea(r: Rect): number {
    return Math.abs(r.x1 - r.x0) * Math.abs(r.y1 - r.y0);
}

export function clamp(x: number, lo: number, hi: number): number {
    return Math.min(hi, Math.max(lo, x));
}
