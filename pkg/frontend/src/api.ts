// Typed HTTP client for the synthesis service. Every request body is
// validated locally first (see validate.ts), carries a request id, and
// belongs to an endpoint class with newest-wins cancellation: issuing a new
// request in a class aborts the in-flight one.

import { ColorTf, OpacityTf, Rect, View } from "./types.js";
import {
    assertValid, validateCenter, validateColorTf, validateGridR,
    validateOpacityTf, validateRadius, validateRegion, validateView,
} from "./validate.js";

export interface ModelInfo {
    latent_dim: number;
    opacity_size: number;
    color_size: number | null;
    opacity_trained: boolean;
    translation_trained: boolean;
    lambda_l1: number | null;
    volume_loaded: boolean;
    layout_available: boolean;
}

export interface RegionSensitivity {
    sigma: number[];
    request_id: string;
}

export interface SensitivityField {
    field: number[][][];            // (256, r, r)
    sigma_global: number[];
    global_min: number;
    global_max: number;
    field_id: string;
    request_id: string;
}

export interface SmoothedField {
    field: number[][];              // (r, r)
    weights: number[];              // length 256, sums to 1
    request_id: string;
}

export interface LatentLayout {
    points: [number, number][];
    bbox: { min: [number, number]; max: [number, number] };
    default_radius: number;
    count: number;
    request_id: string;
}

export interface GridCell {
    empty: boolean;
    mean_code?: number[];
    image?: string;                 // base64 PNG
}

export interface LatentGrid {
    cells: GridCell[];
    request_id: string;
}

export interface LatentPoint {
    code: number[];
    decoded_tf: number[];
    image: string;                  // base64 PNG
    request_id: string;
}

export interface PngResult {
    png: Uint8Array;
    requestId: string;
}

/** Newest-wins groups: one in-flight request per class. */
export type EndpointClass =
    | "synthesize" | "sensitivity" | "smooth" | "grid" | "point" | "other";

export class ServerError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    private controllers = new Map<EndpointClass, AbortController>();
    private requestSeq = 0;
    readonly sentRequestIds: string[] = [];
    readonly statusLog: number[] = [];

    constructor(private baseUrl: string,
                private fetchImpl: FetchLike = fetch) {}

    nextRequestId(): string {
        return `ui-${++this.requestSeq}`;
    }

    private async dispatch(cls: EndpointClass, path: string,
                           body: Record<string, unknown> | null): Promise<Response> {
        this.controllers.get(cls)?.abort();
        const controller = new AbortController();
        this.controllers.set(cls, controller);
        const requestId = this.nextRequestId();
        this.sentRequestIds.push(requestId);
        const init: RequestInit = body === null
            ? { method: "GET", signal: controller.signal,
                headers: { "X-Request-Id": requestId } }
            : { method: "POST", signal: controller.signal,
                headers: { "content-type": "application/json" },
                body: JSON.stringify({ ...body, request_id: requestId }) };
        const resp = await this.fetchImpl(this.baseUrl + path, init);
        this.statusLog.push(resp.status);
        if (!resp.ok) {
            let message = `${resp.status} on ${path}`;
            try {
                const doc = await resp.json();
                if (doc && typeof doc.error === "string") {
                    message = doc.error;
                }
            } catch {
                // non-JSON error body; keep the status message
            }
            throw new ServerError(resp.status, message);
        }
        return resp;
    }

    private async json<T>(cls: EndpointClass, path: string,
                          body: Record<string, unknown> | null): Promise<T> {
        const resp = await this.dispatch(cls, path, body);
        return (await resp.json()) as T;
    }

    private async png(cls: EndpointClass, path: string,
                      body: Record<string, unknown>): Promise<PngResult> {
        const resp = await this.dispatch(cls, path, body);
        const buf = await resp.arrayBuffer();
        return { png: new Uint8Array(buf),
                 requestId: resp.headers.get("x-request-id") ?? "" };
    }

    modelInfo(): Promise<{ model: ModelInfo; request_id: string }> {
        return this.json("other", "/model", null);
    }

    async synthesize(view: View, tO: OpacityTf, tC: ColorTf): Promise<PngResult> {
        assertValid(validateView(view), validateOpacityTf(tO),
                    validateColorTf(tC));
        return this.png("synthesize", "/synthesize",
                        { view, t_o: tO, t_c: tC });
    }

    async renderGroundtruth(view: View, tO: OpacityTf,
                      tC: ColorTf): Promise<PngResult> {
        assertValid(validateView(view), validateOpacityTf(tO),
                    validateColorTf(tC));
        return this.png("other", "/render/groundtruth",
                        { view, t_o: tO, t_c: tC });
    }

    async sensitivityRegion(view: View, tO: OpacityTf, tC: ColorTf,
                      region: number[],
                      imageSize: number): Promise<RegionSensitivity> {
        assertValid(validateView(view), validateOpacityTf(tO),
                    validateColorTf(tC), validateRegion(region, imageSize));
        return this.json("sensitivity", "/sensitivity/region",
                         { view, t_o: tO, t_c: tC, region });
    }

    async sensitivityField(view: View, tO: OpacityTf, tC: ColorTf, r: number,
                     imageSize: number): Promise<SensitivityField> {
        assertValid(validateView(view), validateOpacityTf(tO),
                    validateColorTf(tC), validateGridR(r, imageSize));
        return this.json("sensitivity", "/sensitivity/field",
                         { view, t_o: tO, t_c: tC, r });
    }

    async sensitivitySmooth(fieldId: string, center: number,
                      bandwidth?: number): Promise<SmoothedField> {
        assertValid(validateCenter(center));
        const body: Record<string, unknown> = { field_id: fieldId, center };
        if (bandwidth !== undefined) {
            body.bandwidth = bandwidth;
        }
        return this.json("smooth", "/sensitivity/smooth", body);
    }

    latentLayout(): Promise<LatentLayout> {
        return this.json("other", "/latent/layout", null);
    }

    async latentGrid(view: View, tC: ColorTf, rect: Rect): Promise<LatentGrid> {
        assertValid(validateView(view), validateColorTf(tC));
        return this.json("grid", "/latent/grid",
                         { view, t_c: tC,
                           rect: [rect.x0, rect.y0, rect.x1, rect.y1] });
    }

    async latentPoint(view: View, tC: ColorTf, p: [number, number],
                radius: number): Promise<LatentPoint> {
        assertValid(validateView(view), validateColorTf(tC),
                    validateRadius(radius));
        return this.json("point", "/latent/point",
                         { view, t_c: tC, p, radius });
    }
}

/**
 * Trailing-edge debouncer for drag gestures: only the newest call within the
 * window fires, which pairs with the client's newest-wins cancellation.
 */
export class Debouncer {
    private timer: ReturnType<typeof setTimeout> | null = null;

    constructor(private delayMs = 60) {}

    schedule(fn: () => void): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
        }
        this.timer = setTimeout(() => {
            this.timer = null;
            fn();
        }, this.delayMs);
    }

    cancel(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
    }
}
