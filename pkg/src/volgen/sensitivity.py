"""Opacity-TF sensitivity via backpropagation.

Given a trained two-stage model, the sensitivity of an image region R is the
gradient of the l2 norm of the synthesized color image over R with respect to
the 256-entry opacity transfer function. Computing that gradient for every
block of an r x r partition of the image yields a 256 x r x r field; smoothing
the field across the scalar-value axis with a Gaussian centred on a selected
scalar value gives a per-block view of where that value matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import ModelBundle, normalize_color_tf
from .tensor import Tensor, l2norm_region, mul_mask

FIELD_BATCH = 64
DEFAULT_BANDWIDTH = 8.0


@dataclass(frozen=True)
class Region:
    """Pixel set over the output image: a rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def validate(self, width: int, height: int) -> None:
        if not (0 <= self.x0 < self.x1 <= width
                and 0 <= self.y0 < self.y1 <= height):
            raise ValueError(
                f"region {self} is empty or outside a {width}x{height} image")

    def mask(self, width: int, height: int) -> np.ndarray:
        self.validate(width, height)
        m = np.zeros((height, width), dtype=np.float64)
        m[self.y0:self.y1, self.x0:self.x1] = 1.0
        return m


def mask_region(mask: np.ndarray) -> np.ndarray:
    """Validate an explicit pixel mask and coerce it to {0, 1} floats."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("region mask must be 2-D")
    m = (m != 0).astype(np.float64)
    if not m.any():
        raise ValueError("region mask selects no pixels")
    return m


def _forward_color(bundle: ModelBundle, view_encoded: np.ndarray,
                   t_o: Tensor, t_c: np.ndarray) -> Tensor:
    """Color image (B, 3, H, W) in [0, 1] with t_o in the graph.

    The dtype of `t_o` drives the graph dtype, so passing float64 data (with
    parameters cast accordingly) runs the whole pass in 64-bit.
    """
    dt = t_o.dtype
    v = Tensor(np.asarray(view_encoded, dtype=dt))
    tc = Tensor(normalize_color_tf(np.asarray(t_c)).astype(dt))
    bundle.set_eval()
    op_img, _, _ = bundle.g_o(v, t_o)
    color = bundle.g_t(op_img, v, t_o, tc)
    return (color + 1.0) * 0.5


def region_sensitivity(bundle: ModelBundle, view_encoded: np.ndarray,
                       t_o: np.ndarray, t_c: np.ndarray,
                       region: Region | np.ndarray,
                       squared: bool = False) -> np.ndarray:
    """Gradient of the color image's l2 norm over `region` w.r.t. t_o.

    `region` is a Region rectangle or an explicit (H, W) mask. `squared=True`
    differentiates the squared norm instead (test-only mode: squared block
    norms are additive across a partition, plain norms are not).
    """
    bundle._require(bundle.translation_trained, "translation GAN not trained")
    size = bundle.translation_cfg.out_size
    mask = (region.mask(size, size) if isinstance(region, Region)
            else mask_region(region))
    if mask.shape != (size, size):
        raise ValueError(f"mask shape {mask.shape} != image {size}x{size}")

    t = np.asarray(t_o)
    dt = t.dtype if t.dtype == np.float64 else np.float32
    to_t = Tensor(t.astype(dt)[None], requires_grad=True)
    color = _forward_color(bundle, np.asarray(view_encoded)[None], to_t,
                           np.asarray(t_c)[None])
    if squared:
        masked = mul_mask(color, mask.astype(dt))
        scalar = (masked * masked).sum()
    else:
        scalar = l2norm_region(color, mask.astype(dt))
    scalar.backward()
    return to_t.grad[0].copy()


def scalar_value_field(bundle: ModelBundle, view_encoded: np.ndarray,
                       t_o: np.ndarray, t_c: np.ndarray, r: int = 8,
                       batch: int = FIELD_BATCH,
                       squared: bool = False) -> np.ndarray:
    """Per-block sensitivity field, shape (256, r, r).

    The image is split into an r x r grid of blocks; each block's region
    gradient is one backward pass. Blocks are batched: inputs are replicated
    along the batch axis and the per-sample block norms are summed, which
    keeps each sample's gradient confined to its own t_o row.
    """
    bundle._require(bundle.translation_trained, "translation GAN not trained")
    size = bundle.translation_cfg.out_size
    if size % r != 0:
        raise ValueError(f"grid {r} does not divide image size {size}")
    block = size // r
    n_tf = t_o.shape[-1]

    t = np.asarray(t_o)
    dt = t.dtype if t.dtype == np.float64 else np.float32
    view = np.asarray(view_encoded)
    t_c = np.asarray(t_c)
    blocks = [(by, bx) for by in range(r) for bx in range(r)]
    field = np.empty((n_tf, r, r), dtype=np.float64)

    for lo in range(0, len(blocks), batch):
        chunk = blocks[lo:lo + batch]
        b = len(chunk)
        masks = np.zeros((b, 1, size, size), dtype=dt)
        for s, (by, bx) in enumerate(chunk):
            masks[s, 0, by * block:(by + 1) * block,
                  bx * block:(bx + 1) * block] = 1.0
        to_t = Tensor(np.repeat(t.astype(dt)[None], b, axis=0),
                      requires_grad=True)
        color = _forward_color(bundle, np.repeat(view[None], b, axis=0),
                               to_t, np.repeat(t_c[None], b, axis=0))
        if squared:
            masked = mul_mask(color, masks)
            scalar = (masked * masked).sum()
        else:
            scalar = l2norm_region(color, masks)
        scalar.backward()
        for s, (by, bx) in enumerate(chunk):
            field[:, by, bx] = to_t.grad[s]
    return field


def smooth_field(field: np.ndarray, center: int,
                 bandwidth: float = DEFAULT_BANDWIDTH):
    """Gaussian-filter the field across the scalar-value axis.

    Returns (r x r smoothed field, normalized weight curve of length 256).
    """
    n = field.shape[0]
    if not 0 <= center < n:
        raise ValueError(f"center index {center} outside [0, {n})")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    idx = np.arange(n, dtype=np.float64)
    w = np.exp(-((idx - center) ** 2) / (2.0 * bandwidth ** 2))
    w /= w.sum()
    return np.tensordot(w, field, axes=(0, 0)), w
