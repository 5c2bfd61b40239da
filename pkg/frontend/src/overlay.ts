// Pixel-level mapping for the sensitivity heat overlay and the hover weight
// curve. The overlay colour is driven by the field's global range so frames
// stay comparable while hovering; the alpha channel is driven by an optional
// selection range so users can isolate a magnitude band.

import { clamp } from "./types.js";

export interface RangeSpec {
    min: number;
    max: number;
}

/** Cool-to-warm ramp: blue (low) through white to red (high). */
export function heatColor(t: number): [number, number, number] {
    const u = clamp(t, 0, 1);
    if (u < 0.5) {
        const s = u * 2;
        return [Math.round(59 + s * 196), Math.round(76 + s * 179),
                Math.round(192 + s * 63)];
    }
    const s = (u - 0.5) * 2;
    return [Math.round(255 - s * 75), Math.round(255 - s * 216),
            Math.round(255 - s * 216)];
}

function normalize(v: number, range: RangeSpec): number {
    const span = range.max - range.min;
    return span > 0 ? (v - range.min) / span : 0.5;
}

/**
 * Map an r×r scalar field to RGBA bytes. Colour uses the global range;
 * opacity is 1 inside the selection range, fading to 0 outside it.
 */
export function heatOverlay(field: number[][], global: RangeSpec,
                            selection?: RangeSpec): Uint8ClampedArray {
    const r = field.length;
    const out = new Uint8ClampedArray(r * r * 4);
    const sel = selection ?? global;
    const selSpan = Math.max(sel.max - sel.min, 1e-12);
    for (let y = 0; y < r; y++) {
        for (let x = 0; x < r; x++) {
            const v = field[y][x];
            const [cr, cg, cb] = heatColor(normalize(v, global));
            let alpha = 1.0;
            if (v < sel.min) {
                alpha = Math.max(0, 1 - (sel.min - v) / selSpan);
            } else if (v > sel.max) {
                alpha = Math.max(0, 1 - (v - sel.max) / selSpan);
            }
            const o = (y * r + x) * 4;
            out[o] = cr;
            out[o + 1] = cg;
            out[o + 2] = cb;
            out[o + 3] = Math.round(alpha * 255);
        }
    }
    return out;
}

/** Nearest-neighbour upscale of an r×r RGBA buffer to size×size. */
export function upscaleNearest(rgba: Uint8ClampedArray, r: number,
                               size: number): Uint8ClampedArray {
    if (size % r !== 0) {
        throw new Error(`size ${size} must be a multiple of r ${r}`);
    }
    const k = size / r;
    const out = new Uint8ClampedArray(size * size * 4);
    for (let y = 0; y < size; y++) {
        for (let x = 0; x < size; x++) {
            const src = ((y / k | 0) * r + (x / k | 0)) * 4;
            const dst = (y * size + x) * 4;
            out[dst] = rgba[src];
            out[dst + 1] = rgba[src + 1];
            out[dst + 2] = rgba[src + 2];
            out[dst + 3] = rgba[src + 3];
        }
    }
    return out;
}

/** Index of the weight curve's peak; used to anchor the hover marker. */
export function weightPeak(weights: number[]): number {
    let best = 0;
    for (let i = 1; i < weights.length; i++) {
        if (weights[i] > weights[best]) {
            best = i;
        }
    }
    return best;
}

/** Scale a curve to [0, 1] for plotting over the TF editor. */
export function normalizeCurve(curve: number[]): number[] {
    const max = Math.max(...curve);
    if (!(max > 0)) {
        return curve.map(() => 0);
    }
    return curve.map((v) => v / max);
}
