// Scripted end-to-end session against a live service running the trained toy
// model. Spawns `volgen serve`, drives the UI state machine through the five
// core interactions, and asserts every round trip stays under 500 ms with no
// 422 ever returned to UI-originated requests.
//
// Artifact locations (checkpoint, layout, data) default to the toy cache and
// can be overridden with VOLGEN_UI_CKPT / VOLGEN_UI_LAYOUT / VOLGEN_UI_PORT.

import { spawn, ChildProcess } from "node:child_process";
import { existsSync } from "node:fs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
    TfEditorState, applyEditorResponse, initialEditorState, reduceEditor,
    initialExplorerState, reduceExplorer, applyExplorerResponse,
    ExplorerState, ApiRequest,
} from "../src/state.js";
import { weightPeak } from "../src/overlay.js";
import { N_TF, View } from "../src/types.js";

const CKPT = process.env.VOLGEN_UI_CKPT ?? "/tmp/volgen_toy_cache/model.vgan";
const LAYOUT = process.env.VOLGEN_UI_LAYOUT
    ?? "/tmp/volgen_toy_cache/layout.json";
const PORT = Number(process.env.VOLGEN_UI_PORT ?? 8731);
const BASE = `http://127.0.0.1:${PORT}`;
const BUDGET_MS = 500;

const VIEW: View = [0.6, 0.3, 0.0, 2.2];

let server: ChildProcess | null = null;
const client = new ApiClient(BASE);
const timings: Record<string, number> = {};

async function waitForServer(timeoutMs = 60000): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        try {
            const resp = await fetch(`${BASE}/model`);
            if (resp.ok) {
                return;
            }
        } catch {
            // not up yet
        }
        await new Promise((r) => setTimeout(r, 500));
    }
    throw new Error("service did not come up in time");
}

async function timed<T>(label: string, fn: () => Promise<T>): Promise<T> {
    const start = performance.now();
    const out = await fn();
    timings[label] = performance.now() - start;
    return out;
}

beforeAll(async () => {
    if (!existsSync(CKPT) || !existsSync(LAYOUT)) {
        throw new Error(
            `missing toy artifacts: ${CKPT} / ${LAYOUT} — train the toy `
            + "model and build a layout first (see README)");
    }
    server = spawn("volgen", ["serve", "--ckpt", CKPT, "--volume",
                              "two-shell", "--layout", LAYOUT,
                              "--port", String(PORT)],
                   { stdio: ["ignore", "pipe", "pipe"] });
    await waitForServer();
}, 120000);

afterAll(() => {
    server?.kill();
    const lines = Object.entries(timings)
        .map(([k, v]) => `  ${k}: ${v.toFixed(1)} ms`);
    console.log(`round-trip timings (budget ${BUDGET_MS} ms):\n`
                + lines.join("\n"));
});

describe("scripted session against the toy service", () => {
    let editor: TfEditorState;
    let explorer: ExplorerState;
    let imageSize = 64;

    function takeOne(requests: ApiRequest[], endpoint: string): ApiRequest {
        const req = requests.find((r) => r.endpoint === endpoint);
        expect(req, `expected a ${endpoint} request`).toBeDefined();
        return req!;
    }

    it("connects and reads the model card", async () => {
        const info = await client.modelInfo();
        expect(info.model.translation_trained).toBe(true);
        imageSize = info.model.color_size ?? 64;
        editor = initialEditorState(VIEW, imageSize);
    });

    it("TF edit refreshes the synthesized image within budget", async () => {
        const { state, requests } = reduceEditor(editor, {
            kind: "add_mode",
            mode: { mean: 0.5, std: 0.1, amplitude: 0.8 },
        });
        editor = state;
        const req = takeOne(requests, "synthesize");
        if (req.endpoint !== "synthesize") {
            return;
        }
        const res = await timed("synthesize", () =>
            client.synthesize(req.view, req.tO, req.tC));
        expect(res.png.length).toBeGreaterThan(8);
        // PNG magic
        expect([...res.png.slice(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
        editor = applyEditorResponse(editor, {
            endpoint: "synthesize", image: "frame",
        });
        expect(timings.synthesize).toBeLessThan(BUDGET_MS);
    });

    it("region select yields a 256-point sigma overlay within budget", async () => {
        const half = imageSize / 2;
        const { state, requests } = reduceEditor(editor, {
            kind: "select_region", region: [0, 0, half, half],
        });
        editor = state;
        const req = takeOne(requests, "sensitivity_region");
        if (req.endpoint !== "sensitivity_region") {
            return;
        }
        const res = await timed("sensitivity_region", () =>
            client.sensitivityRegion(req.view, req.tO, req.tC,
                                     req.region, imageSize));
        expect(res.sigma).toHaveLength(N_TF);
        expect(res.sigma.every((v) => Number.isFinite(v))).toBe(true);
        editor = applyEditorResponse(editor, {
            endpoint: "sensitivity_region", sigma: res.sigma,
        });
        expect(timings.sensitivity_region).toBeLessThan(BUDGET_MS);
    });

    it("TF-domain hover returns the field overlay and weight curve", async () => {
        // the block field is prefetched once (hover precondition), untimed
        const fetchOut = reduceEditor(editor, { kind: "fetch_field" });
        const freq = takeOne(fetchOut.requests, "sensitivity_field");
        if (freq.endpoint !== "sensitivity_field") {
            return;
        }
        const field = await client.sensitivityField(
            freq.view, freq.tO, freq.tC, freq.r, imageSize);
        expect(field.field).toHaveLength(N_TF);
        editor = applyEditorResponse(editor, {
            endpoint: "sensitivity_field", fieldId: field.field_id,
            sigmaGlobal: field.sigma_global,
            min: field.global_min, max: field.global_max,
        });

        const hover = reduceEditor(editor, {
            kind: "hover_tf_domain", index: 128,
        });
        const req = takeOne(hover.requests, "sensitivity_smooth");
        if (req.endpoint !== "sensitivity_smooth") {
            return;
        }
        const res = await timed("sensitivity_smooth", () =>
            client.sensitivitySmooth(req.fieldId, req.center));
        expect(res.weights).toHaveLength(N_TF);
        expect(weightPeak(res.weights)).toBe(128);
        const r = field.field[0].length;
        expect(res.field).toHaveLength(r);
        editor = applyEditorResponse(editor, {
            endpoint: "sensitivity_smooth", field: res.field,
            weights: res.weights, center: 128,
        });
        expect(timings.sensitivity_smooth).toBeLessThan(BUDGET_MS);
    });

    it("projection brush fills a 4x4 grid within budget", async () => {
        const layout = await client.latentLayout();
        expect(layout.count).toBeGreaterThan(0);
        explorer = initialExplorerState(VIEW, editor.tC, layout);

        const { state, requests } = reduceExplorer(explorer, {
            kind: "brush_projection",
            rect: { x0: layout.bbox.min[0], y0: layout.bbox.min[1],
                    x1: layout.bbox.max[0], y1: layout.bbox.max[1] },
        });
        explorer = state;
        const req = takeOne(requests, "latent_grid");
        if (req.endpoint !== "latent_grid") {
            return;
        }
        const res = await timed("latent_grid", () =>
            client.latentGrid(req.view, req.tC, req.rect));
        expect(res.cells).toHaveLength(16);
        const occupied = res.cells.filter((c) => !c.empty);
        expect(occupied.length).toBeGreaterThan(0);
        expect(occupied.every((c) => (c.image ?? "").length > 0)).toBe(true);
        explorer = applyExplorerResponse(explorer, {
            endpoint: "latent_grid",
            cells: res.cells.map((c) => ({
                empty: c.empty, image: c.image ?? null,
            })),
        });
        expect(timings.latent_grid).toBeLessThan(BUDGET_MS);
    });

    it("projection hover shows the decoded-TF panel within budget", async () => {
        const p = explorer.points[0];
        const { state, requests } = reduceExplorer(explorer, {
            kind: "hover_projection", p,
        });
        explorer = state;
        const req = takeOne(requests, "latent_point");
        if (req.endpoint !== "latent_point") {
            return;
        }
        const res = await timed("latent_point", () =>
            client.latentPoint(req.view, req.tC, req.p, req.radius));
        expect(res.decoded_tf).toHaveLength(N_TF);
        expect(res.decoded_tf.every((v) => v >= 0 && v <= 1)).toBe(true);
        expect(res.image.length).toBeGreaterThan(0);
        explorer = applyExplorerResponse(explorer, {
            endpoint: "latent_point",
            decodedTf: res.decoded_tf, image: res.image,
        });
        expect(explorer.panel).not.toBeNull();
        expect(timings.latent_point).toBeLessThan(BUDGET_MS);
    });

    it("the server never answered a UI request with 422", () => {
        expect(client.statusLog.length).toBeGreaterThan(0);
        expect(client.statusLog.every((s) => s !== 422)).toBe(true);
    });
});
