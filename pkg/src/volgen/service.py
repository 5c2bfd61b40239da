"""HTTP service exposing synthesis, sensitivity, latent exploration, and
ground-truth rendering over a loaded model checkpoint.

All endpoints are inference-only: they never mutate model parameters. JSON
responses echo a request id (body field "request_id" or X-Request-Id header);
PNG responses carry it in the X-Request-Id header. Error codes: 400 malformed
body, 409 model or resource not loaded, 422 invariant violation.
"""

from __future__ import annotations

import base64
import io
import itertools
import json
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image

from . import latent as latent_mod
from . import sensitivity as sens_mod
from .nets import ModelBundle, UntrainedModelError
from .renderer import (N_TF, RenderConfig, Viewpoint, render,
                       validate_color_tf, validate_opacity_tf)
from .volume import VolumeGrid


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class ServiceState:
    """Shared read-only model plus lazily built caches."""

    def __init__(self, bundle: ModelBundle | None = None,
                 volume: VolumeGrid | None = None,
                 render_cfg: RenderConfig | None = None,
                 layout: latent_mod.ProjectionLayout | None = None,
                 train_tfs: np.ndarray | None = None,
                 layout_samples: int = 2000):
        self.bundle = bundle
        self.volume = volume
        self.render_cfg = render_cfg or RenderConfig()
        self.layout = layout
        self.train_tfs = train_tfs
        self.layout_samples = layout_samples
        self.request_count = 0
        self.field_cache: dict[str, np.ndarray] = {}
        self._layout_lock = threading.Lock()
        self._field_ids = itertools.count()

    def require_bundle(self) -> ModelBundle:
        if self.bundle is None:
            raise ApiError(409, "no model loaded")
        return self.bundle

    def require_layout(self) -> latent_mod.ProjectionLayout:
        with self._layout_lock:          # single-flight build
            if self.layout is None:
                if self.train_tfs is None:
                    raise ApiError(409, "no latent layout available")
                bundle = self.require_bundle()
                samples = latent_mod.sample_latent_space(
                    bundle, self.train_tfs, n=self.layout_samples, seed=0)
                self.layout = latent_mod.project_tsne(
                    samples.codes, samples.decoded, seed=0)
            return self.layout

    def cache_field(self, field: np.ndarray) -> str:
        fid = f"field-{next(self._field_ids)}"
        if len(self.field_cache) > 32:
            self.field_cache.pop(next(iter(self.field_cache)))
        self.field_cache[fid] = field
        return fid


# -- request parsing -------------------------------------------------------


def _need(body: dict, key: str):
    if key not in body:
        raise ApiError(400, f"missing field {key!r}")
    return body[key]


def _parse_view(raw) -> Viewpoint:
    try:
        vals = [float(x) for x in raw]
    except (TypeError, ValueError):
        raise ApiError(400, "view must be a list of four numbers")
    if len(vals) != 4:
        raise ApiError(400, "view must be [azimuth, elevation, roll, distance]")
    try:
        return Viewpoint.from_raw(vals)
    except ValueError as exc:
        raise ApiError(422, str(exc))


def _parse_opacity(raw) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise ApiError(400, "t_o must be a numeric list")
    try:
        return validate_opacity_tf(arr)
    except ValueError as exc:
        raise ApiError(422, str(exc))


def _parse_color(raw) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise ApiError(400, "t_c must be a numeric 3x256 list")
    try:
        return validate_color_tf(arr)
    except ValueError as exc:
        raise ApiError(422, str(exc))


def _png_bytes(img: np.ndarray) -> bytes:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    mode = "RGB" if arr.ndim == 3 else "L"
    buf = io.BytesIO()
    Image.fromarray(arr, mode).save(buf, format="PNG")
    return buf.getvalue()


def _png_b64(img: np.ndarray) -> str:
    return base64.b64encode(_png_bytes(img)).decode()


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="volgen service")

    def request_id(request: Request, body: dict | None = None) -> str:
        if body and isinstance(body.get("request_id"), str):
            return body["request_id"]
        return request.headers.get("x-request-id", uuid.uuid4().hex)

    async def read_body(request: Request) -> dict:
        try:
            body = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError:
            raise ApiError(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            raise ApiError(400, "request body must be a JSON object")
        return body

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": exc.message,
                     "request_id": request.headers.get(
                         "x-request-id", uuid.uuid4().hex)})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc):
        return JSONResponse(status_code=400,
                            content={"error": "malformed request body"})

    @app.middleware("http")
    async def count_requests(request: Request, call_next):
        state.request_count += 1
        return await call_next(request)

    @app.get("/model")
    async def model_info(request: Request):
        bundle = state.require_bundle()
        rid = request_id(request)
        cfg = {
            "latent_dim": bundle.opacity_cfg.latent_dim,
            "opacity_size": bundle.opacity_cfg.image_size,
            "opacity_trained": bundle.opacity_trained,
            "translation_trained": bundle.translation_trained,
            "color_size": (bundle.translation_cfg.out_size
                           if bundle.translation_cfg else None),
            "lambda_l1": (bundle.translation_cfg.lambda_l1
                          if bundle.translation_cfg else None),
            "volume_loaded": state.volume is not None,
            "layout_available": (state.layout is not None
                                 or state.train_tfs is not None),
        }
        return JSONResponse({"model": cfg, "request_id": rid},
                            headers={"X-Request-Id": rid})

    def synth_inputs(body: dict):
        bundle = state.require_bundle()
        if not bundle.translation_trained:
            raise ApiError(409, "translation stage not trained")
        view = _parse_view(_need(body, "view"))
        t_o = _parse_opacity(_need(body, "t_o"))
        t_c = _parse_color(_need(body, "t_c"))
        return bundle, view, t_o, t_c

    @app.post("/synthesize")
    async def synthesize(request: Request):
        body = await read_body(request)
        bundle, view, t_o, t_c = synth_inputs(body)
        img = bundle.synthesize(view.encode().astype(np.float32),
                                t_o.astype(np.float32),
                                t_c.astype(np.float32))
        return Response(content=_png_bytes(img), media_type="image/png",
                        headers={"X-Request-Id": request_id(request, body)})

    @app.post("/sensitivity/region")
    async def sensitivity_region(request: Request):
        body = await read_body(request)
        bundle, view, t_o, t_c = synth_inputs(body)
        raw = _need(body, "region")
        size = bundle.translation_cfg.out_size
        try:
            region = sens_mod.Region(*(int(x) for x in raw))
            region.validate(size, size)
        except (TypeError, ValueError) as exc:
            raise ApiError(422, f"bad region: {exc}")
        sigma = sens_mod.region_sensitivity(
            bundle, view.encode(), t_o, t_c, region)
        rid = request_id(request, body)
        return JSONResponse({"sigma": sigma.tolist(), "request_id": rid},
                            headers={"X-Request-Id": rid})

    @app.post("/sensitivity/field")
    async def sensitivity_field(request: Request):
        body = await read_body(request)
        bundle, view, t_o, t_c = synth_inputs(body)
        r = body.get("r", 8)
        if not isinstance(r, int) or r < 1:
            raise ApiError(422, "r must be a positive integer")
        size = bundle.translation_cfg.out_size
        if size % r:
            raise ApiError(422, f"r must divide the image size {size}")
        field = sens_mod.scalar_value_field(bundle, view.encode(), t_o, t_c, r)
        sigma_global = sens_mod.region_sensitivity(
            bundle, view.encode(), t_o, t_c, sens_mod.Region(0, 0, size, size))
        fid = state.cache_field(field)
        rid = request_id(request, body)
        return JSONResponse({
            "field": field.tolist(),
            "sigma_global": sigma_global.tolist(),
            "global_min": float(field.min()),
            "global_max": float(field.max()),
            "field_id": fid,
            "request_id": rid,
        }, headers={"X-Request-Id": rid})

    @app.post("/sensitivity/smooth")
    async def sensitivity_smooth(request: Request):
        body = await read_body(request)
        state.require_bundle()
        if "field_id" in body:
            field = state.field_cache.get(body["field_id"])
            if field is None:
                raise ApiError(409, f"unknown field_id {body['field_id']!r}")
        elif "field" in body:
            try:
                field = np.asarray(body["field"], dtype=np.float64)
            except ValueError:
                raise ApiError(400, "field must be a numeric array")
            if field.ndim != 3 or field.shape[0] != N_TF:
                raise ApiError(422, "field must have shape (256, r, r)")
        else:
            raise ApiError(400, "provide field or field_id")
        center = _need(body, "center")
        if not isinstance(center, int) or not 0 <= center < N_TF:
            raise ApiError(422, f"center must be an integer in [0, {N_TF})")
        bandwidth = body.get("bandwidth", sens_mod.DEFAULT_BANDWIDTH)
        try:
            bandwidth = float(bandwidth)
        except (TypeError, ValueError):
            raise ApiError(400, "bandwidth must be a number")
        if bandwidth <= 0:
            raise ApiError(422, "bandwidth must be positive")
        smoothed, weights = sens_mod.smooth_field(field, center, bandwidth)
        rid = request_id(request, body)
        return JSONResponse({"field": smoothed.tolist(),
                             "weights": weights.tolist(),
                             "request_id": rid},
                            headers={"X-Request-Id": rid})

    @app.get("/latent/layout")
    async def latent_layout(request: Request):
        layout = state.require_layout()
        lo, hi = layout.bbox
        rid = request_id(request)
        return JSONResponse({
            "points": layout.points.tolist(),
            "bbox": {"min": lo.tolist(), "max": hi.tolist()},
            "default_radius": layout.default_radius,
            "count": len(layout.points),
            "request_id": rid,
        }, headers={"X-Request-Id": rid})

    @app.post("/latent/grid")
    async def latent_grid(request: Request):
        body = await read_body(request)
        bundle = state.require_bundle()
        layout = state.require_layout()
        view = _parse_view(_need(body, "view"))
        t_c = _parse_color(_need(body, "t_c"))
        raw = _need(body, "rect")
        try:
            rect = [float(x) for x in raw]
        except (TypeError, ValueError):
            raise ApiError(400, "rect must be [x0, y0, x1, y1]")
        if len(rect) != 4:
            raise ApiError(400, "rect must be [x0, y0, x1, y1]")
        cells = latent_mod.grid_synthesize(
            bundle, layout, rect, view.encode().astype(np.float32),
            t_c.astype(np.float32))
        out = []
        for cell in cells:
            if cell["empty"]:
                out.append({"empty": True})
            else:
                out.append({"empty": False,
                            "mean_code": cell["mean_code"].tolist(),
                            "image": _png_b64(cell["image"])})
        rid = request_id(request, body)
        return JSONResponse({"cells": out, "request_id": rid},
                            headers={"X-Request-Id": rid})

    @app.post("/latent/point")
    async def latent_point(request: Request):
        body = await read_body(request)
        bundle = state.require_bundle()
        layout = state.require_layout()
        view = _parse_view(_need(body, "view"))
        t_c = _parse_color(_need(body, "t_c"))
        raw = _need(body, "p")
        try:
            p = [float(x) for x in raw]
        except (TypeError, ValueError):
            raise ApiError(400, "p must be [x, y]")
        if len(p) != 2:
            raise ApiError(400, "p must be [x, y]")
        radius = body.get("radius")
        if radius is not None:
            try:
                radius = float(radius)
            except (TypeError, ValueError):
                raise ApiError(400, "radius must be a number")
            if radius <= 0:
                raise ApiError(422, "radius must be positive")
        try:
            result = latent_mod.shepard_interpolate(
                bundle, layout, p, radius,
                view.encode().astype(np.float32), t_c.astype(np.float32))
        except latent_mod.NoNeighborsError as exc:
            raise ApiError(422, str(exc))
        rid = request_id(request, body)
        return JSONResponse({
            "code": result["code"].tolist(),
            "decoded_tf": result["t_o"].tolist(),
            "image": _png_b64(result["image"]),
            "request_id": rid,
        }, headers={"X-Request-Id": rid})

    @app.post("/render/groundtruth")
    async def render_groundtruth(request: Request):
        body = await read_body(request)
        if state.volume is None:
            raise ApiError(409, "no volume loaded")
        view = _parse_view(_need(body, "view"))
        t_o = _parse_opacity(_need(body, "t_o"))
        t_c = _parse_color(_need(body, "t_c"))
        color, _ = render(state.volume, view, t_o, t_c, state.render_cfg)
        return Response(content=_png_bytes(color), media_type="image/png",
                        headers={"X-Request-Id": request_id(request, body)})

    @app.exception_handler(UntrainedModelError)
    async def untrained_handler(request: Request, exc):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    return app
