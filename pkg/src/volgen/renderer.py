"""Emission-absorption volume renderer: front-to-back compositing along
perspective camera rays, producing color and accumulated-opacity images.

Opacity correction makes per-sample opacity consistent under step-size
changes: alpha = 1 - (1 - t_o[s])^(ds/ds_ref). At ds == ds_ref the lookup
value is used verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import lab_to_linear_rgb, linear_to_srgb
from .volume import VolumeGrid, gradient_at, sample_trilinear

N_TF = 256

PHI_MAX = 85.0 * np.pi / 180.0
PSI_MAX = np.pi / 4.0
DIST_MIN = 1.5
DIST_MAX = 4.0
FOV_Y = 45.0 * np.pi / 180.0

# direct-illumination constants
K_AMBIENT = 0.2
K_DIFFUSE = 0.7
K_SPECULAR = 0.3
SHININESS = 32.0
_GRAD_EPS = 1e-6


@dataclass(frozen=True)
class Viewpoint:
    azimuth: float
    elevation: float
    roll: float
    distance: float

    def __post_init__(self):
        if not (-PHI_MAX - 1e-9 <= self.elevation <= PHI_MAX + 1e-9):
            raise ValueError(f"elevation out of [-{PHI_MAX}, {PHI_MAX}]")
        if not (-PSI_MAX - 1e-9 <= self.roll <= PSI_MAX + 1e-9):
            raise ValueError(f"roll out of [-{PSI_MAX}, {PSI_MAX}]")
        if not (DIST_MIN - 1e-9 <= self.distance <= DIST_MAX + 1e-9):
            raise ValueError(f"distance out of [{DIST_MIN}, {DIST_MAX}]")

    def encode(self) -> np.ndarray:
        """5-vector (cos az, sin az, phi/phimax, psi/psimax, normalized d)."""
        return np.array([
            np.cos(self.azimuth),
            np.sin(self.azimuth),
            self.elevation / PHI_MAX,
            self.roll / PSI_MAX,
            (self.distance - DIST_MIN) / (DIST_MAX - DIST_MIN),
        ], dtype=np.float64)

    @staticmethod
    def from_raw(v) -> "Viewpoint":
        th, ph, ps, d = (float(x) for x in v)
        return Viewpoint(th % (2 * np.pi), ph, ps, d)


def validate_opacity_tf(t_o: np.ndarray) -> np.ndarray:
    t_o = np.asarray(t_o, dtype=np.float64)
    if t_o.shape != (N_TF,):
        raise ValueError(f"opacity TF must have length {N_TF}, got {t_o.shape}")
    if t_o.min() < -1e-9 or t_o.max() > 1 + 1e-9:
        raise ValueError("opacity TF entries must lie in [0, 1]")
    return np.clip(t_o, 0.0, 1.0)


def validate_color_tf(t_c: np.ndarray) -> np.ndarray:
    t_c = np.asarray(t_c, dtype=np.float64)
    if t_c.shape != (3, N_TF):
        raise ValueError(f"color TF must have shape (3, {N_TF}), got {t_c.shape}")
    L, a, b = t_c[0], t_c[1], t_c[2]
    if L.min() < -1e-6 or L.max() > 100 + 1e-6:
        raise ValueError("color TF L channel must lie in [0, 100]")
    if max(abs(a).max(), abs(b).max()) > 110 + 1e-6:
        raise ValueError("color TF a/b channels must lie in [-110, 110]")
    return t_c


@dataclass(frozen=True)
class RenderConfig:
    size: tuple[int, int] = (64, 64)
    step: float = 0.5            # voxel units
    step_ref: float = 1.0        # voxel units; alpha correction reference
    illumination: str = "none"   # "none" | "direct"
    tau_stop: float = 0.999
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    tf_lookup: str = "nearest"   # "nearest" | "linear"

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if not (0.9 < self.tau_stop <= 1.0):
            raise ValueError("tau_stop must lie in (0.9, 1]")
        if self.illumination not in ("none", "direct"):
            raise ValueError(f"unknown illumination {self.illumination!r}")
        if self.tf_lookup not in ("nearest", "linear"):
            raise ValueError(f"unknown tf_lookup {self.tf_lookup!r}")


def camera_basis(view: Viewpoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed (forward, right, up) with roll applied about forward."""
    th, ph = view.azimuth, view.elevation
    out_dir = np.array([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), np.sin(ph)])
    forward = -out_dir
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    # roll about the view axis (Rodrigues, axis = forward)
    c, s = np.cos(view.roll), np.sin(view.roll)
    right, up = c * right + s * up, -s * right + c * up
    return forward, right, up


def camera_rays(view: Viewpoint, vol: VolumeGrid, size: tuple[int, int]):
    """Per-pixel (origins, directions, t_enter, t_exit) against the volume's
    voxel-center bounding box. Missed rays get t_enter > t_exit."""
    w, h = size
    forward, right, up = camera_basis(view)
    eye = vol.center - forward * (view.distance * vol.bounding_radius)

    tan_half = np.tan(FOV_Y / 2.0)
    aspect = w / h
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    u, v = np.meshgrid(xs * tan_half * aspect, ys * tan_half)
    dirs = forward[None, None, :] + u[..., None] * right + v[..., None] * up
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)

    lo = np.zeros(3)
    hi = vol.extent
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (lo - eye) * inv
        t_hi = (hi - eye) * inv
    t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=-1)
    t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=-1)
    t_near = np.maximum(t_near, 0.0)
    origins = np.broadcast_to(eye, dirs.shape)
    return origins, dirs, t_near, t_far


def _tf_lookup(tf: np.ndarray, s: np.ndarray, mode: str) -> np.ndarray:
    """Look up a (256,) or (256, k) table at normalized scalar values s."""
    if mode == "nearest":
        idx = np.clip(np.round(s * (N_TF - 1)).astype(np.int64), 0, N_TF - 1)
        return tf[idx]
    x = np.clip(s * (N_TF - 1), 0.0, N_TF - 1)
    i0 = np.minimum(x.astype(np.int64), N_TF - 2)
    f = x - i0
    f = f if tf.ndim == 1 else f[..., None]
    return tf[i0] * (1 - f) + tf[i0 + 1] * f


def shade_direct(base: np.ndarray, normal: np.ndarray, view_dir: np.ndarray,
                 light_dir: np.ndarray) -> np.ndarray:
    """Lambertian + Blinn-Phong; zero normal falls back to ambient only."""
    base = np.asarray(base, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    v = np.asarray(view_dir, dtype=np.float64)
    l = np.asarray(light_dir, dtype=np.float64)
    nn = np.linalg.norm(n, axis=-1, keepdims=True)
    flat = nn[..., 0] < _GRAD_EPS
    n_unit = np.where(flat[..., None], 0.0, n / np.maximum(nn, _GRAD_EPS))
    h = v + l
    h /= np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-12)
    diff = np.maximum(np.sum(n_unit * l, axis=-1), 0.0)
    spec = np.maximum(np.sum(n_unit * h, axis=-1), 0.0) ** SHININESS
    out = (K_AMBIENT * base
           + K_DIFFUSE * diff[..., None] * base
           + K_SPECULAR * spec[..., None])
    out = np.where(flat[..., None], K_AMBIENT * base, out)
    return np.clip(out, 0.0, 1.0)


def composite_ray(samples, t_o, t_c_linear, cfg: RenderConfig,
                  sample_colors=None):
    """Composite one front-to-back ordered sequence of scalar samples.

    Returns (linear color (3,), accumulated opacity). `sample_colors`
    overrides the TF color lookup (used by tests and shading paths).
    """
    samples = np.asarray(samples, dtype=np.float64)
    I = np.zeros(3)
    tau = 0.0
    expo = cfg.step / cfg.step_ref
    for i, s in enumerate(samples):
        a0 = float(_tf_lookup(np.asarray(t_o), np.asarray(s), cfg.tf_lookup))
        alpha = a0 if expo == 1.0 else 1.0 - (1.0 - a0) ** expo
        if sample_colors is not None:
            c = np.asarray(sample_colors[i], dtype=np.float64)
        else:
            c = _tf_lookup(np.asarray(t_c_linear), np.asarray(s), cfg.tf_lookup)
        I = I + (1.0 - tau) * c * alpha
        tau = tau + (1.0 - tau) * alpha
        if tau >= cfg.tau_stop:
            break
    color = I + (1.0 - tau) * np.asarray(cfg.background, dtype=np.float64)
    return color, tau


def composite_over(alphas, colors, background=(0.0, 0.0, 0.0)):
    """Raw over-operator on explicit per-sample (alpha, color) pairs."""
    I = np.zeros(3)
    tau = 0.0
    for a, c in zip(alphas, colors):
        I = I + (1.0 - tau) * np.asarray(c, dtype=np.float64) * a
        tau = tau + (1.0 - tau) * a
    return I + (1.0 - tau) * np.asarray(background, dtype=np.float64), tau


def render(vol: VolumeGrid, view: Viewpoint, t_o: np.ndarray, t_c: np.ndarray,
           cfg: RenderConfig):
    """Render color (h, w, 3 sRGB) and opacity (h, w) images.

    `t_c` is Lab (3, 256); compositing runs in linear RGB and the color image
    is sRGB-encoded at the end. The opacity image is accumulated tau at
    march end. Deterministic for identical inputs.
    """
    t_o = validate_opacity_tf(t_o)
    t_c = validate_color_tf(t_c)
    w, h = cfg.size
    tc_linear = lab_to_linear_rgb(t_c.T)  # (256, 3)

    origins, dirs, t_near, t_far = camera_rays(view, vol, cfg.size)
    step_world = cfg.step * min(vol.spacing)
    expo = cfg.step / cfg.step_ref

    I = np.zeros((h, w, 3))
    tau = np.zeros((h, w))
    hit = t_near < t_far
    n_steps = 0
    if np.any(hit):
        n_steps = int(np.ceil((t_far[hit] - t_near[hit]).max() / step_world))

    if cfg.illumination == "direct":
        forward, right, up = camera_basis(view)
        # light fixed in camera space: toward the viewer plus overhead
        light = -forward + up
        light = light / np.linalg.norm(light)

    for k in range(n_steps):
        t = t_near + (k + 0.5) * step_world
        active = hit & (t < t_far) & (tau < cfg.tau_stop)
        if not np.any(active):
            break
        p = origins[active] + dirs[active] * t[active][..., None]
        s = sample_trilinear(vol, p)
        a0 = _tf_lookup(t_o, s, cfg.tf_lookup)
        alpha = a0 if expo == 1.0 else 1.0 - (1.0 - a0) ** expo
        c = _tf_lookup(tc_linear, s, cfg.tf_lookup)
        if cfg.illumination == "direct":
            g = gradient_at(vol, p)
            c = shade_direct(c, -g, -dirs[active], light)
        ta = tau[active]
        I[active] += ((1.0 - ta) * alpha)[..., None] * c
        tau[active] = ta + (1.0 - ta) * alpha

    color = I + (1.0 - tau)[..., None] * np.asarray(cfg.background)
    return linear_to_srgb(color), tau
