import { describe, expect, it } from "vitest";

import {
    clampColorPoint, clampMode, sampleColorTf, sampleFreehand,
    sampleOpacityGmm,
} from "../src/tf.js";
import { N_TF } from "../src/types.js";

describe("sampleOpacityGmm", () => {
    it("places a mode's peak amplitude at its mean", () => {
        const tO = sampleOpacityGmm([{ mean: 0.5, std: 0.1, amplitude: 0.8 }]);
        expect(tO).toHaveLength(N_TF);
        expect(tO[128]).toBeCloseTo(0.8, 2);
    });

    it("returns a flat zero curve with no modes", () => {
        const tO = sampleOpacityGmm([]);
        expect(tO.every((v) => v === 0)).toBe(true);
    });

    it("clips superposed modes to [0, 1]", () => {
        const mode = { mean: 0.3, std: 0.2, amplitude: 0.9 };
        const tO = sampleOpacityGmm([mode, mode, mode]);
        expect(Math.max(...tO)).toBeLessThanOrEqual(1.0);
        expect(Math.min(...tO)).toBeGreaterThanOrEqual(0.0);
    });

    it("decays toward zero away from a narrow mode", () => {
        const tO = sampleOpacityGmm([{ mean: 0.5, std: 0.02, amplitude: 1 }]);
        expect(tO[0]).toBeLessThan(1e-6);
        expect(tO[N_TF - 1]).toBeLessThan(1e-6);
    });
});

describe("clampMode", () => {
    it("clamps amplitude above one down to one", () => {
        expect(clampMode({ mean: 0.5, std: 0.1, amplitude: 1.2 }).amplitude)
            .toBe(1.0);
    });

    it("clamps mean into the scalar domain and keeps std positive", () => {
        const m = clampMode({ mean: -0.3, std: 0, amplitude: 0.5 });
        expect(m.mean).toBe(0.0);
        expect(m.std).toBeGreaterThan(0);
    });
});

describe("sampleFreehand", () => {
    it("resamples a two-point ramp linearly", () => {
        const tO = sampleFreehand([0.0, 1.0]);
        expect(tO[0]).toBeCloseTo(0.0, 12);
        expect(tO[N_TF - 1]).toBeCloseTo(1.0, 12);
        expect(tO[128]).toBeCloseTo(128 / 255, 12);
    });

    it("extends a single sample as a constant and clamps", () => {
        expect(sampleFreehand([1.7]).every((v) => v === 1.0)).toBe(true);
    });

    it("passes through an already-256-sample curve", () => {
        const curve = Array.from({ length: N_TF },
                                 (_, i) => (i % 7) / 10);
        const tO = sampleFreehand(curve);
        curve.forEach((v, i) => expect(tO[i]).toBeCloseTo(v, 12));
    });

    it("rejects an empty curve", () => {
        expect(() => sampleFreehand([])).toThrow();
    });
});

describe("sampleColorTf", () => {
    it("interpolates each Lab channel between control points", () => {
        const tC = sampleColorTf([
            { x: 0, L: 0, a: -100, b: 50 },
            { x: 1, L: 100, a: 100, b: -50 },
        ]);
        expect(tC[0][0]).toBeCloseTo(0, 9);
        expect(tC[0][N_TF - 1]).toBeCloseTo(100, 9);
        expect(tC[1][128]).toBeCloseTo(-100 + 200 * (128 / 255), 9);
        expect(tC[2][128]).toBeCloseTo(50 - 100 * (128 / 255), 9);
    });

    it("extends end points as constants", () => {
        const tC = sampleColorTf([
            { x: 0.4, L: 20, a: 0, b: 0 },
            { x: 0.6, L: 80, a: 0, b: 0 },
        ]);
        expect(tC[0][0]).toBeCloseTo(20, 9);
        expect(tC[0][N_TF - 1]).toBeCloseTo(80, 9);
    });

    it("is insensitive to control-point ordering", () => {
        const pts = [
            { x: 0.8, L: 90, a: 10, b: 10 },
            { x: 0.2, L: 10, a: -10, b: -10 },
        ];
        const a = sampleColorTf(pts);
        const b = sampleColorTf([...pts].reverse());
        expect(a).toEqual(b);
    });

    it("rejects an empty control-point list", () => {
        expect(() => sampleColorTf([])).toThrow();
    });
});

describe("clampColorPoint", () => {
    it("clamps Lab channels into server-accepted ranges", () => {
        const p = clampColorPoint({ x: 1.4, L: 150, a: -200, b: 111 });
        expect(p).toEqual({ x: 1.0, L: 100, a: -110, b: 110 });
    });
});
