// Pure UI state machines. A gesture reducer maps (state, gesture) to a new
// state plus a list of request descriptors; a response reducer maps
// (state, response) to a new state. No reducer touches the network or the
// clock, so replaying a recorded gesture log reproduces the exact request
// sequence.

import {
    ColorPoint, GmmMode, clampColorPoint, clampMode, sampleColorTf,
    sampleFreehand, sampleOpacityGmm,
} from "./tf.js";
import { ColorTf, OpacityTf, Rect, View, rectArea } from "./types.js";

// -- request descriptors ----------------------------------------------------

export type ApiRequest =
    | { endpoint: "synthesize"; view: View; tO: OpacityTf; tC: ColorTf }
    | { endpoint: "sensitivity_region"; view: View; tO: OpacityTf;
        tC: ColorTf; region: number[] }
    | { endpoint: "sensitivity_field"; view: View; tO: OpacityTf;
        tC: ColorTf; r: number }
    | { endpoint: "sensitivity_smooth"; fieldId: string; center: number }
    | { endpoint: "latent_grid"; view: View; tC: ColorTf; rect: Rect }
    | { endpoint: "latent_point"; view: View; tC: ColorTf;
        p: [number, number]; radius: number };

export interface Reduction<S> {
    state: S;
    requests: ApiRequest[];
}

// -- transfer-function editor ----------------------------------------------

export interface SmoothedOverlay {
    field: number[][];
    weights: number[];
    center: number;
}

export interface TfEditorState {
    view: View;
    modes: GmmMode[];
    freehand: number[] | null;      // non-null overrides the mode sum
    colorPoints: ColorPoint[];
    tO: OpacityTf;
    tC: ColorTf;
    imageSize: number;
    fieldR: number;
    region: number[] | null;        // active image region, or null
    sigma: number[] | null;         // current 256-point overlay
    fieldId: string | null;         // server-cached sensitivity field
    fieldRange: { min: number; max: number } | null;
    smoothed: SmoothedOverlay | null;
    image: string | null;           // object URL / data URL of latest frame
}

export type TfGesture =
    | { kind: "add_mode"; mode: GmmMode }
    | { kind: "move_mode"; index: number; mode: GmmMode }
    | { kind: "delete_mode"; index: number }
    | { kind: "set_freehand"; curve: number[] }
    | { kind: "clear_freehand" }
    | { kind: "add_color_point"; point: ColorPoint }
    | { kind: "move_color_point"; index: number; point: ColorPoint }
    | { kind: "delete_color_point"; index: number }
    | { kind: "select_region"; region: number[] }
    | { kind: "clear_region" }
    | { kind: "fetch_field" }
    | { kind: "hover_tf_domain"; index: number };

export type TfResponse =
    | { endpoint: "synthesize"; image: string }
    | { endpoint: "sensitivity_region"; sigma: number[] }
    | { endpoint: "sensitivity_field"; fieldId: string;
        sigmaGlobal: number[]; min: number; max: number }
    | { endpoint: "sensitivity_smooth"; field: number[][];
        weights: number[]; center: number };

export const DEFAULT_COLOR_POINTS: ColorPoint[] = [
    { x: 0.0, L: 30.0, a: 40.0, b: -30.0 },
    { x: 1.0, L: 85.0, a: -20.0, b: 60.0 },
];

export function initialEditorState(view: View, imageSize: number,
                                   fieldR = 8): TfEditorState {
    const colorPoints = DEFAULT_COLOR_POINTS;
    return {
        view,
        modes: [],
        freehand: null,
        colorPoints,
        tO: sampleOpacityGmm([]),
        tC: sampleColorTf(colorPoints),
        imageSize,
        fieldR,
        region: null,
        sigma: null,
        fieldId: null,
        fieldRange: null,
        smoothed: null,
        image: null,
    };
}

function resample(state: TfEditorState): TfEditorState {
    const tO = state.freehand !== null
        ? sampleFreehand(state.freehand)
        : sampleOpacityGmm(state.modes);
    return { ...state, tO, tC: sampleColorTf(state.colorPoints) };
}

/** Refresh requests after any TF change: image, plus σ if a region is live. */
function tfChangeRequests(state: TfEditorState): ApiRequest[] {
    const requests: ApiRequest[] = [
        { endpoint: "synthesize", view: state.view,
          tO: state.tO, tC: state.tC },
    ];
    if (state.region !== null) {
        requests.push({ endpoint: "sensitivity_region", view: state.view,
                        tO: state.tO, tC: state.tC, region: state.region });
    }
    return requests;
}

export function reduceEditor(state: TfEditorState,
                             gesture: TfGesture): Reduction<TfEditorState> {
    switch (gesture.kind) {
        case "add_mode": {
            const next = resample({
                ...state, freehand: null,
                modes: [...state.modes, clampMode(gesture.mode)],
            });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "move_mode": {
            if (gesture.index < 0 || gesture.index >= state.modes.length) {
                return { state, requests: [] };
            }
            const modes = state.modes.slice();
            modes[gesture.index] = clampMode(gesture.mode);
            const next = resample({ ...state, modes });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "delete_mode": {
            if (gesture.index < 0 || gesture.index >= state.modes.length) {
                return { state, requests: [] };
            }
            const modes = state.modes.filter((_, i) => i !== gesture.index);
            const next = resample({ ...state, modes });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "set_freehand": {
            const next = resample({ ...state, freehand: gesture.curve });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "clear_freehand": {
            const next = resample({ ...state, freehand: null });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "add_color_point": {
            const next = resample({
                ...state,
                colorPoints: [...state.colorPoints,
                              clampColorPoint(gesture.point)],
            });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "move_color_point": {
            if (gesture.index < 0
                || gesture.index >= state.colorPoints.length) {
                return { state, requests: [] };
            }
            const colorPoints = state.colorPoints.slice();
            colorPoints[gesture.index] = clampColorPoint(gesture.point);
            const next = resample({ ...state, colorPoints });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "delete_color_point": {
            if (state.colorPoints.length <= 1) {
                return { state, requests: [] };    // keep the ramp defined
            }
            const colorPoints = state.colorPoints.filter(
                (_, i) => i !== gesture.index);
            const next = resample({ ...state, colorPoints });
            return { state: next, requests: tfChangeRequests(next) };
        }
        case "select_region": {
            const [x0, y0, x1, y1] = gesture.region;
            if (x1 <= x0 || y1 <= y0) {
                return { state, requests: [] };    // zero-area rect ignored
            }
            const next = { ...state, region: gesture.region };
            return {
                state: next,
                requests: [{ endpoint: "sensitivity_region", view: next.view,
                             tO: next.tO, tC: next.tC,
                             region: gesture.region }],
            };
        }
        case "clear_region":
            return { state: { ...state, region: null, sigma: null },
                     requests: [] };
        case "fetch_field":
            return {
                state,
                requests: [{ endpoint: "sensitivity_field", view: state.view,
                             tO: state.tO, tC: state.tC, r: state.fieldR }],
            };
        case "hover_tf_domain": {
            if (state.fieldId === null) {
                return { state, requests: [] };    // precondition: field fetched
            }
            return {
                state,
                requests: [{ endpoint: "sensitivity_smooth",
                             fieldId: state.fieldId,
                             center: gesture.index }],
            };
        }
    }
}

export function applyEditorResponse(state: TfEditorState,
                                    response: TfResponse): TfEditorState {
    switch (response.endpoint) {
        case "synthesize":
            return { ...state, image: response.image };
        case "sensitivity_region":
            return { ...state, sigma: response.sigma };
        case "sensitivity_field":
            return {
                ...state,
                fieldId: response.fieldId,
                fieldRange: { min: response.min, max: response.max },
                sigma: state.region === null ? response.sigmaGlobal
                                             : state.sigma,
            };
        case "sensitivity_smooth":
            return {
                ...state,
                smoothed: { field: response.field,
                            weights: response.weights,
                            center: response.center },
            };
    }
}

// -- latent-space explorer --------------------------------------------------

export interface GridCellState {
    empty: boolean;
    image: string | null;
}

export interface ExplorerState {
    view: View;
    tC: ColorTf;
    points: [number, number][];
    bbox: { min: [number, number]; max: [number, number] };
    defaultRadius: number;
    brush: Rect | null;
    grid: GridCellState[] | null;
    hover: { p: [number, number]; radius: number } | null;
    panel: { decodedTf: number[]; image: string } | null;
    notice: string | null;
}

export type ExplorerGesture =
    | { kind: "brush_projection"; rect: Rect }
    | { kind: "hover_projection"; p: [number, number]; radius?: number }
    | { kind: "clear_brush" }
    | { kind: "clear_hover" };

export type ExplorerResponse =
    | { endpoint: "latent_grid"; cells: GridCellState[] }
    | { endpoint: "latent_point"; decodedTf: number[]; image: string }
    | { endpoint: "latent_point_empty"; message: string };

export function initialExplorerState(
        view: View, tC: ColorTf,
        layout: { points: [number, number][];
                  bbox: { min: [number, number]; max: [number, number] };
                  default_radius: number }): ExplorerState {
    return {
        view,
        tC,
        points: layout.points,
        bbox: layout.bbox,
        defaultRadius: layout.default_radius,
        brush: null,
        grid: null,
        hover: null,
        panel: null,
        notice: null,
    };
}

/** Brushes are clamped to the layout bounding box before any request. */
function clampRectToBbox(rect: Rect, bbox: ExplorerState["bbox"]): Rect {
    const lo = (v: number, axis: 0 | 1) =>
        Math.min(Math.max(v, bbox.min[axis]), bbox.max[axis]);
    return {
        x0: lo(Math.min(rect.x0, rect.x1), 0),
        y0: lo(Math.min(rect.y0, rect.y1), 1),
        x1: lo(Math.max(rect.x0, rect.x1), 0),
        y1: lo(Math.max(rect.y0, rect.y1), 1),
    };
}

export function reduceExplorer(state: ExplorerState,
                               gesture: ExplorerGesture)
        : Reduction<ExplorerState> {
    switch (gesture.kind) {
        case "brush_projection": {
            const rect = clampRectToBbox(gesture.rect, state.bbox);
            if (rectArea(rect) === 0) {
                return { state, requests: [] };
            }
            const next = { ...state, brush: rect };
            return {
                state: next,
                requests: [{ endpoint: "latent_grid", view: state.view,
                             tC: state.tC, rect }],
            };
        }
        case "hover_projection": {
            const radius = gesture.radius ?? state.defaultRadius;
            if (!(radius > 0)) {
                return { state, requests: [] };
            }
            const next = { ...state, hover: { p: gesture.p, radius } };
            return {
                state: next,
                requests: [{ endpoint: "latent_point", view: state.view,
                             tC: state.tC, p: gesture.p, radius }],
            };
        }
        case "clear_brush":
            return { state: { ...state, brush: null, grid: null },
                     requests: [] };
        case "clear_hover":
            return { state: { ...state, hover: null, panel: null,
                              notice: null },
                     requests: [] };
    }
}

export function applyExplorerResponse(state: ExplorerState,
                                      response: ExplorerResponse)
        : ExplorerState {
    switch (response.endpoint) {
        case "latent_grid":
            return { ...state, grid: response.cells };
        case "latent_point":
            return {
                ...state, notice: null,
                panel: { decodedTf: response.decodedTf,
                         image: response.image },
            };
        case "latent_point_empty":
            return { ...state, panel: null, notice: response.message };
    }
}

// -- replay -----------------------------------------------------------------

/**
 * Replay a recorded editor gesture log from a fixed initial state and return
 * the full request sequence. Determinism of this function is the replay
 * invariant the tests assert.
 */
export function replayEditorLog(initial: TfEditorState,
                                log: TfGesture[]): ApiRequest[] {
    const requests: ApiRequest[] = [];
    let state = initial;
    for (const gesture of log) {
        const out = reduceEditor(state, gesture);
        state = out.state;
        requests.push(...out.requests);
    }
    return requests;
}
