// Transfer-function editing model: a sum-of-Gaussians opacity curve with a
// freehand fallback, and a piecewise-linear Lab color ramp over draggable
// control points. Sampling uses the same 256-bin grid as the server.

import { ColorTf, N_TF, OpacityTf, clamp, AB_LIMIT, L_MAX, L_MIN } from "./types.js";

export interface GmmMode {
    mean: number;       // scalar-domain position in [0, 1]
    std: number;        // width, kept strictly positive
    amplitude: number;  // peak opacity in [0, 1]
}

export interface ColorPoint {
    x: number;          // scalar-domain position in [0, 1]
    L: number;          // [0, 100]
    a: number;          // [-110, 110]
    b: number;          // [-110, 110]
}

const MIN_STD = 1e-3;

/** Out-of-range mode parameters are clamped, never rejected. */
export function clampMode(mode: GmmMode): GmmMode {
    return {
        mean: clamp(mode.mean, 0.0, 1.0),
        std: Math.max(mode.std, MIN_STD),
        amplitude: clamp(mode.amplitude, 0.0, 1.0),
    };
}

export function clampColorPoint(p: ColorPoint): ColorPoint {
    return {
        x: clamp(p.x, 0.0, 1.0),
        L: clamp(p.L, L_MIN, L_MAX),
        a: clamp(p.a, -AB_LIMIT, AB_LIMIT),
        b: clamp(p.b, -AB_LIMIT, AB_LIMIT),
    };
}

/** Sample the clamped mode sum at x_i = i / 255, matching the generator. */
export function sampleOpacityGmm(modes: GmmMode[]): OpacityTf {
    const out = new Array<number>(N_TF).fill(0);
    for (const m of modes) {
        const denom = 2 * m.std * m.std;
        for (let i = 0; i < N_TF; i++) {
            const x = i / (N_TF - 1);
            out[i] += m.amplitude * Math.exp(-((x - m.mean) ** 2) / denom);
        }
    }
    for (let i = 0; i < N_TF; i++) {
        out[i] = clamp(out[i], 0.0, 1.0);
    }
    return out;
}

/** Resample a freehand polyline (>= 1 samples) onto the 256-bin grid. */
export function sampleFreehand(curve: number[]): OpacityTf {
    if (curve.length === 0) {
        throw new Error("freehand curve needs at least one sample");
    }
    if (curve.length === 1) {
        return new Array<number>(N_TF).fill(clamp(curve[0], 0, 1));
    }
    const out = new Array<number>(N_TF);
    const last = curve.length - 1;
    for (let i = 0; i < N_TF; i++) {
        const t = (i / (N_TF - 1)) * last;
        const j = Math.min(Math.floor(t), last - 1);
        const frac = t - j;
        out[i] = clamp(curve[j] * (1 - frac) + curve[j + 1] * frac, 0, 1);
    }
    return out;
}

/**
 * Sample the color ramp by linear interpolation between control points,
 * extending the end points as constants. Points are sorted by x first so
 * drag order never matters.
 */
export function sampleColorTf(points: ColorPoint[]): ColorTf {
    if (points.length === 0) {
        throw new Error("color ramp needs at least one control point");
    }
    const pts = [...points].sort((p, q) => p.x - q.x);
    const rows: ColorTf = [new Array(N_TF), new Array(N_TF), new Array(N_TF)];
    for (let i = 0; i < N_TF; i++) {
        const x = i / (N_TF - 1);
        let k = 0;
        while (k < pts.length - 1 && pts[k + 1].x < x) {
            k++;
        }
        const p = pts[k];
        const q = pts[Math.min(k + 1, pts.length - 1)];
        const span = q.x - p.x;
        const t = span > 0 ? clamp((x - p.x) / span, 0, 1) : 0;
        rows[0][i] = p.L + t * (q.L - p.L);
        rows[1][i] = p.a + t * (q.a - p.a);
        rows[2][i] = p.b + t * (q.b - p.b);
    }
    return rows;
}
