// Browser entry point: wires the pure reducers to canvases and the HTTP
// client. All network effects flow through runEditorRequests /
// runExplorerRequests, which map request descriptors to client calls; the
// reducers themselves stay pure and testable.

import { ApiClient, Debouncer, ServerError } from "./api.js";
import { heatOverlay, normalizeCurve, upscaleNearest } from "./overlay.js";
import {
    ApiRequest, ExplorerState, TfEditorState, applyEditorResponse,
    applyExplorerResponse, initialEditorState, initialExplorerState,
    reduceEditor, reduceExplorer, ExplorerGesture, TfGesture,
} from "./state.js";
import { N_TF, View } from "./types.js";

const DEFAULT_VIEW: View = [0.6, 0.3, 0.0, 2.2];

function bytesToUrl(png: Uint8Array): string {
    return URL.createObjectURL(new Blob([png.buffer as ArrayBuffer],
                                        { type: "image/png" }));
}

function b64ToUrl(b64: string): string {
    return `data:image/png;base64,${b64}`;
}

class App {
    client: ApiClient;
    editor: TfEditorState;
    explorer: ExplorerState | null = null;
    tfDebounce = new Debouncer(60);
    hoverDebounce = new Debouncer(60);

    constructor(baseUrl: string, imageSize: number) {
        this.client = new ApiClient(baseUrl);
        this.editor = initialEditorState(DEFAULT_VIEW, imageSize);
    }

    dispatchEditor(gesture: TfGesture, debounce = false): void {
        const { state, requests } = reduceEditor(this.editor, gesture);
        this.editor = state;
        this.renderEditor();
        const run = () => void this.runEditorRequests(requests);
        if (debounce) {
            this.tfDebounce.schedule(run);
        } else {
            run();
        }
    }

    dispatchExplorer(gesture: ExplorerGesture): void {
        if (this.explorer === null) {
            return;
        }
        const { state, requests } = reduceExplorer(this.explorer, gesture);
        this.explorer = state;
        this.renderExplorer();
        void this.runExplorerRequests(requests);
    }

    async runEditorRequests(requests: ApiRequest[]): Promise<void> {
        for (const req of requests) {
            try {
                switch (req.endpoint) {
                    case "synthesize": {
                        const res = await this.client.synthesize(
                            req.view, req.tO, req.tC);
                        this.editor = applyEditorResponse(this.editor, {
                            endpoint: "synthesize",
                            image: bytesToUrl(res.png),
                        });
                        break;
                    }
                    case "sensitivity_region": {
                        const res = await this.client.sensitivityRegion(
                            req.view, req.tO, req.tC, req.region,
                            this.editor.imageSize);
                        this.editor = applyEditorResponse(this.editor, {
                            endpoint: "sensitivity_region",
                            sigma: res.sigma,
                        });
                        break;
                    }
                    case "sensitivity_field": {
                        const res = await this.client.sensitivityField(
                            req.view, req.tO, req.tC, req.r,
                            this.editor.imageSize);
                        this.editor = applyEditorResponse(this.editor, {
                            endpoint: "sensitivity_field",
                            fieldId: res.field_id,
                            sigmaGlobal: res.sigma_global,
                            min: res.global_min,
                            max: res.global_max,
                        });
                        break;
                    }
                    case "sensitivity_smooth": {
                        const res = await this.client.sensitivitySmooth(
                            req.fieldId, req.center);
                        this.editor = applyEditorResponse(this.editor, {
                            endpoint: "sensitivity_smooth",
                            field: res.field,
                            weights: res.weights,
                            center: req.center,
                        });
                        break;
                    }
                    default:
                        break;
                }
            } catch (err) {
                if (!this.isSuperseded(err)) {
                    console.error(err);
                }
                return;
            }
            this.renderEditor();
        }
    }

    async runExplorerRequests(requests: ApiRequest[]): Promise<void> {
        for (const req of requests) {
            try {
                if (req.endpoint === "latent_grid") {
                    const res = await this.client.latentGrid(
                        req.view, req.tC, req.rect);
                    this.explorer = applyExplorerResponse(this.explorer!, {
                        endpoint: "latent_grid",
                        cells: res.cells.map((c) => ({
                            empty: c.empty,
                            image: c.image ? b64ToUrl(c.image) : null,
                        })),
                    });
                } else if (req.endpoint === "latent_point") {
                    try {
                        const res = await this.client.latentPoint(
                            req.view, req.tC, req.p, req.radius);
                        this.explorer = applyExplorerResponse(this.explorer!, {
                            endpoint: "latent_point",
                            decodedTf: res.decoded_tf,
                            image: b64ToUrl(res.image),
                        });
                    } catch (err) {
                        if (err instanceof ServerError && err.status === 422) {
                            // empty hover disk: clear the panel with a notice
                            this.explorer = applyExplorerResponse(
                                this.explorer!, {
                                    endpoint: "latent_point_empty",
                                    message: "no samples inside hover radius",
                                });
                        } else {
                            throw err;
                        }
                    }
                }
            } catch (err) {
                if (!this.isSuperseded(err)) {
                    console.error(err);
                }
                return;
            }
            this.renderExplorer();
        }
    }

    isSuperseded(err: unknown): boolean {
        return err instanceof DOMException && err.name === "AbortError";
    }

    // -- drawing -----------------------------------------------------------

    canvas(id: string): CanvasRenderingContext2D | null {
        const el = document.getElementById(id) as HTMLCanvasElement | null;
        return el?.getContext("2d") ?? null;
    }

    renderEditor(): void {
        const ctx = this.canvas("tf-plot");
        if (ctx === null) {
            return;
        }
        const { width: w, height: h } = ctx.canvas;
        ctx.clearRect(0, 0, w, h);
        const plot = (curve: number[], color: string) => {
            ctx.strokeStyle = color;
            ctx.beginPath();
            curve.forEach((v, i) => {
                const x = (i / (N_TF - 1)) * w;
                const y = h - v * h;
                i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
            });
            ctx.stroke();
        };
        plot(this.editor.tO, "#333");
        if (this.editor.sigma !== null) {
            plot(normalizeCurve(this.editor.sigma), "#d33");
        }
        if (this.editor.smoothed !== null) {
            plot(normalizeCurve(this.editor.smoothed.weights), "#d88");
        }
        const img = document.getElementById("frame") as HTMLImageElement | null;
        if (img !== null && this.editor.image !== null) {
            img.src = this.editor.image;
        }
        this.renderOverlay();
    }

    renderOverlay(): void {
        const ctx = this.canvas("heat");
        const s = this.editor;
        if (ctx === null || s.smoothed === null || s.fieldRange === null) {
            return;
        }
        const r = s.smoothed.field.length;
        const rgba = upscaleNearest(
            heatOverlay(s.smoothed.field, s.fieldRange), r, s.imageSize);
        ctx.putImageData(new ImageData(
            rgba as Uint8ClampedArray<ArrayBuffer>,
            s.imageSize, s.imageSize), 0, 0);
    }

    renderExplorer(): void {
        const ctx = this.canvas("projection");
        const s = this.explorer;
        if (ctx === null || s === null) {
            return;
        }
        const { width: w, height: h } = ctx.canvas;
        ctx.clearRect(0, 0, w, h);
        const sx = (x: number) => ((x - s.bbox.min[0])
            / (s.bbox.max[0] - s.bbox.min[0])) * w;
        const sy = (y: number) => h - ((y - s.bbox.min[1])
            / (s.bbox.max[1] - s.bbox.min[1])) * h;
        ctx.fillStyle = "#4a7";
        for (const [x, y] of s.points) {
            ctx.fillRect(sx(x) - 1, sy(y) - 1, 2, 2);
        }
        if (s.brush !== null) {
            ctx.strokeStyle = "#36c";
            ctx.strokeRect(sx(s.brush.x0), sy(s.brush.y1),
                           sx(s.brush.x1) - sx(s.brush.x0),
                           sy(s.brush.y0) - sy(s.brush.y1));
        }
        const grid = document.getElementById("grid");
        if (grid !== null && s.grid !== null) {
            grid.replaceChildren(...s.grid.map((cell) => {
                const img = document.createElement("img");
                if (!cell.empty && cell.image !== null) {
                    img.src = cell.image;
                }
                return img;
            }));
        }
    }

    async start(): Promise<void> {
        await this.client.modelInfo();
        this.dispatchEditor({
            kind: "add_mode",
            mode: { mean: 0.5, std: 0.1, amplitude: 0.8 },
        });
        this.dispatchEditor({ kind: "fetch_field" });
        const layout = await this.client.latentLayout();
        this.explorer = initialExplorerState(
            this.editor.view, this.editor.tC, layout);
        this.renderExplorer();
    }
}

if (typeof document !== "undefined" && document.getElementById("tf-plot")) {
    const size = Number(document.body.dataset.imageSize ?? 64);
    const app = new App(document.body.dataset.api ?? "", size);
    void app.start();
    (window as unknown as Record<string, unknown>).volgenApp = app;
}
