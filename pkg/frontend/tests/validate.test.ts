import { describe, expect, it } from "vitest";

import { sampleColorTf, sampleOpacityGmm } from "../src/tf.js";
import { DEFAULT_COLOR_POINTS } from "../src/state.js";
import { ColorTf, N_TF, PHI_MAX, PSI_MAX, View } from "../src/types.js";
import {
    validateCenter, validateColorTf, validateGridR, validateOpacityTf,
    validateRadius, validateRegion, validateView,
} from "../src/validate.js";

const GOOD_VIEW: View = [0.3, 0.1, 0.0, 2.0];

function goodColor(): ColorTf {
    return sampleColorTf(DEFAULT_COLOR_POINTS);
}

describe("validateView", () => {
    it("accepts an in-range view", () => {
        expect(validateView(GOOD_VIEW).ok).toBe(true);
    });

    it("accepts the exact limits", () => {
        expect(validateView([6.0, PHI_MAX, -PSI_MAX, 4.0]).ok).toBe(true);
        expect(validateView([0, -PHI_MAX, PSI_MAX, 1.5]).ok).toBe(true);
    });

    it("rejects out-of-range elevation, roll, distance", () => {
        expect(validateView([0, 3.0, 0, 2]).ok).toBe(false);
        expect(validateView([0, 0, 1.0, 2]).ok).toBe(false);
        expect(validateView([0, 0, 0, 1.0]).ok).toBe(false);
        expect(validateView([0, 0, 0, 4.5]).ok).toBe(false);
    });

    it("rejects wrong arity and non-finite entries", () => {
        expect(validateView([0, 0, 0] as unknown as View).ok).toBe(false);
        expect(validateView([NaN, 0, 0, 2]).ok).toBe(false);
    });
});

describe("validateOpacityTf", () => {
    it("accepts any sampled GMM curve", () => {
        const tO = sampleOpacityGmm([
            { mean: 0.2, std: 0.05, amplitude: 0.9 },
            { mean: 0.7, std: 0.15, amplitude: 0.6 },
        ]);
        expect(validateOpacityTf(tO).ok).toBe(true);
    });

    it("rejects wrong length and out-of-range values", () => {
        expect(validateOpacityTf(new Array(100).fill(0.5)).ok).toBe(false);
        expect(validateOpacityTf(new Array(N_TF).fill(2.0)).ok).toBe(false);
        expect(validateOpacityTf(new Array(N_TF).fill(-0.1)).ok).toBe(false);
    });
});

describe("validateColorTf", () => {
    it("accepts any sampled control-point ramp", () => {
        expect(validateColorTf(goodColor()).ok).toBe(true);
    });

    it("rejects shape and range violations", () => {
        const short = goodColor();
        short[1] = short[1].slice(0, 100);
        expect(validateColorTf(short).ok).toBe(false);

        const hotL = goodColor();
        hotL[0][3] = 120;
        expect(validateColorTf(hotL).ok).toBe(false);

        const hotB = goodColor();
        hotB[2][0] = -111;
        expect(validateColorTf(hotB).ok).toBe(false);
    });
});

describe("geometry validators", () => {
    it("region must be integral, inside the image, positive area", () => {
        expect(validateRegion([0, 0, 8, 8], 16).ok).toBe(true);
        expect(validateRegion([0, 0, 99, 99], 16).ok).toBe(false);
        expect(validateRegion([4, 4, 4, 8], 16).ok).toBe(false);
        expect(validateRegion([0.5, 0, 8, 8], 16).ok).toBe(false);
    });

    it("hover radius must be positive and finite", () => {
        expect(validateRadius(2.5).ok).toBe(true);
        expect(validateRadius(0).ok).toBe(false);
        expect(validateRadius(-1).ok).toBe(false);
        expect(validateRadius(Infinity).ok).toBe(false);
    });

    it("smooth center must be an index into the TF domain", () => {
        expect(validateCenter(0).ok).toBe(true);
        expect(validateCenter(255).ok).toBe(true);
        expect(validateCenter(256).ok).toBe(false);
        expect(validateCenter(1.5).ok).toBe(false);
    });

    it("field grid r must divide the image size", () => {
        expect(validateGridR(8, 64).ok).toBe(true);
        expect(validateGridR(5, 64).ok).toBe(false);
        expect(validateGridR(0, 64).ok).toBe(false);
    });
});
