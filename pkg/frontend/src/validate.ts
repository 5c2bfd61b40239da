// Client-side request validation mirroring the server's 422 rules. Every
// outgoing request passes through these checks, so an invariant-violating
// body is rejected locally and the server's 422 path is never exercised by
// UI-originated traffic.

import {
    AB_LIMIT, ColorTf, DIST_MAX, DIST_MIN, L_MAX, L_MIN, N_TF, OpacityTf,
    PHI_MAX, PSI_MAX, View,
} from "./types.js";

export type Validation = { ok: true } | { ok: false; reason: string };

const OK: Validation = { ok: true };

function fail(reason: string): Validation {
    return { ok: false, reason };
}

function allFinite(xs: number[]): boolean {
    return xs.every((x) => typeof x === "number" && Number.isFinite(x));
}

export function validateView(view: View): Validation {
    if (!Array.isArray(view) || view.length !== 4 || !allFinite(view)) {
        return fail("view must be four finite numbers");
    }
    const [, elevation, roll, distance] = view;
    if (Math.abs(elevation) > PHI_MAX) {
        return fail(`elevation out of [-${PHI_MAX}, ${PHI_MAX}]`);
    }
    if (Math.abs(roll) > PSI_MAX) {
        return fail(`roll out of [-${PSI_MAX}, ${PSI_MAX}]`);
    }
    if (distance < DIST_MIN || distance > DIST_MAX) {
        return fail(`distance out of [${DIST_MIN}, ${DIST_MAX}]`);
    }
    return OK;
}

export function validateOpacityTf(tO: OpacityTf): Validation {
    if (!Array.isArray(tO) || tO.length !== N_TF) {
        return fail(`opacity TF must have length ${N_TF}`);
    }
    if (!allFinite(tO)) {
        return fail("opacity TF entries must be finite numbers");
    }
    for (const v of tO) {
        if (v < 0 || v > 1) {
            return fail("opacity TF entries must lie in [0, 1]");
        }
    }
    return OK;
}

export function validateColorTf(tC: ColorTf): Validation {
    if (!Array.isArray(tC) || tC.length !== 3
        || tC.some((row) => !Array.isArray(row) || row.length !== N_TF)) {
        return fail(`color TF must have shape (3, ${N_TF})`);
    }
    if (tC.some((row) => !allFinite(row))) {
        return fail("color TF entries must be finite numbers");
    }
    const [L, a, b] = tC;
    if (L.some((v) => v < L_MIN || v > L_MAX)) {
        return fail("color TF L channel must lie in [0, 100]");
    }
    if (a.some((v) => Math.abs(v) > AB_LIMIT)
        || b.some((v) => Math.abs(v) > AB_LIMIT)) {
        return fail("color TF a/b channels must lie in [-110, 110]");
    }
    return OK;
}

export function validateRegion(region: number[], size: number): Validation {
    if (!Array.isArray(region) || region.length !== 4
        || !region.every((v) => Number.isInteger(v))) {
        return fail("region must be four integers [x0, y0, x1, y1]");
    }
    const [x0, y0, x1, y1] = region;
    if (x0 < 0 || y0 < 0 || x1 > size || y1 > size) {
        return fail(`region must lie within the ${size}x${size} image`);
    }
    if (x1 <= x0 || y1 <= y0) {
        return fail("region must have positive area");
    }
    return OK;
}

export function validateRadius(radius: number): Validation {
    if (!Number.isFinite(radius) || radius <= 0) {
        return fail("radius must be a positive number");
    }
    return OK;
}

export function validateCenter(center: number): Validation {
    if (!Number.isInteger(center) || center < 0 || center >= N_TF) {
        return fail(`center must be an integer in [0, ${N_TF})`);
    }
    return OK;
}

export function validateGridR(r: number, size: number): Validation {
    if (!Number.isInteger(r) || r < 1 || size % r !== 0) {
        return fail(`r must be a positive divisor of the image size ${size}`);
    }
    return OK;
}

/** Raised locally instead of letting an invalid body reach the server. */
export class ClientValidationError extends Error {}

export function assertValid(...checks: Validation[]): void {
    for (const c of checks) {
        if (!c.ok) {
            throw new ClientValidationError(c.reason);
        }
    }
}
