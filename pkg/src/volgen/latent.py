"""Latent-space exploration for opacity transfer functions.

The opacity generator's encoder/decoder pair defines a low-dimensional code
space over TFs. This module samples that space (uniform box around the
encoded training TFs, decode, re-encode), summarizes its intrinsic dimension
via an SVD spectrum, lays the codes out in 2D with an exact t-SNE, and
supports two queries over the layout: a brushed 4x4 grid of per-cell mean
codes, and Gaussian-weighted Shepard interpolation at a point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .nets import ModelBundle

TSNE_ITERS = 1000
TSNE_EARLY_EXAG = 12.0
TSNE_EXAG_ITERS = 250
TSNE_MOMENTUM_SWITCH = 250
TSNE_LR = 200.0
ENTROPY_TOL = 1e-5
GRID_N = 4
DEFAULT_RADIUS_FRAC = 0.05


class NoNeighborsError(ValueError):
    """Shepard query found no layout points inside the radius."""


@dataclass
class LatentSamples:
    codes: np.ndarray        # (n, d) re-encoded codes
    decoded: np.ndarray      # (n, 256) decoded opacity TFs
    box_lo: np.ndarray       # sampling box, per-dimension
    box_hi: np.ndarray
    seed: int = 0


@dataclass
class ProjectionLayout:
    points: np.ndarray       # (n, 2)
    codes: np.ndarray        # (n, d) source codes
    decoded: np.ndarray      # (n, 256) decoded TFs for the codes
    seed: int = 0
    perplexity: float = 30.0
    kl_initial: float = 0.0
    kl_final: float = 0.0

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def default_radius(self) -> float:
        lo, hi = self.bbox
        return DEFAULT_RADIUS_FRAC * float(np.linalg.norm(hi - lo))

    def to_json(self) -> str:
        return json.dumps({
            "points": self.points.tolist(),
            "codes": self.codes.tolist(),
            "decoded": self.decoded.tolist(),
            "seed": self.seed,
            "perplexity": self.perplexity,
            "kl_initial": self.kl_initial,
            "kl_final": self.kl_final,
        })

    @staticmethod
    def from_json(text: str) -> "ProjectionLayout":
        doc = json.loads(text)
        return ProjectionLayout(
            points=np.asarray(doc["points"], dtype=np.float64),
            codes=np.asarray(doc["codes"], dtype=np.float64),
            decoded=np.asarray(doc["decoded"], dtype=np.float64),
            seed=doc["seed"], perplexity=doc["perplexity"],
            kl_initial=doc["kl_initial"], kl_final=doc["kl_final"])


def sample_latent_space(bundle: ModelBundle, train_tfs: np.ndarray,
                        n: int = 10_000, seed: int = 0,
                        margin: float = 0.10,
                        batch: int = 512) -> LatentSamples:
    """Uniform draws from the encoded-training-TF box (+margin per side),
    decoded and re-encoded so every returned code has a realizable TF."""
    codes_train = bundle.encode_tf(np.asarray(train_tfs, dtype=np.float32))
    lo = codes_train.min(axis=0)
    hi = codes_train.max(axis=0)
    pad = margin * (hi - lo)
    lo, hi = lo - pad, hi + pad

    rng = np.random.default_rng(seed)
    raw = rng.uniform(lo, hi, size=(n, lo.shape[0])).astype(np.float32)
    decoded = np.empty((n, 256), dtype=np.float32)
    codes = np.empty((n, lo.shape[0]), dtype=np.float32)
    for s in range(0, n, batch):
        tf = bundle.decode_tf(raw[s:s + batch])
        decoded[s:s + batch] = tf
        codes[s:s + batch] = bundle.encode_tf(tf)
    return LatentSamples(codes=codes.astype(np.float64),
                         decoded=decoded.astype(np.float64),
                         box_lo=lo.astype(np.float64),
                         box_hi=hi.astype(np.float64), seed=seed)


def svd_falloff(codes: np.ndarray) -> np.ndarray:
    """Singular values of the mean-centered code matrix, descending."""
    c = np.asarray(codes, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 2:
        raise ValueError("need at least two code rows")
    centered = c - c.mean(axis=0)
    return np.linalg.svd(centered, compute_uv=False)


# -- t-SNE -----------------------------------------------------------------


def _conditional_probs(dist_sq: np.ndarray, perplexity: float,
                       tol: float = ENTROPY_TOL,
                       max_iter: int = 64) -> np.ndarray:
    """Row-stochastic affinities with per-point bandwidth matched to the
    target perplexity by binary search on the entropy."""
    n = dist_sq.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        d = np.delete(dist_sq[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            s = w.sum()
            if s <= 0:
                beta, hi = beta / 2, beta
                continue
            p = w / s
            h = -(p * np.log(np.maximum(p, 1e-300))).sum()
            if abs(h - target) < tol:
                break
            if h > target:          # too flat -> narrow the kernel
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (lo + beta) / 2
        row = np.exp(-dist_sq[i] * beta)
        row[i] = 0.0
        P[i] = row / row.sum()
    return P


def _kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    Q, _ = _low_dim_q(Y)
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())


def _low_dim_q(Y: np.ndarray):
    d2 = np.square(Y[:, None, :] - Y[None, :, :]).sum(axis=2)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    return np.maximum(num / num.sum(), 1e-300), num


def project_tsne(codes: np.ndarray, decoded: np.ndarray | None = None,
                 perplexity: float = 30.0, seed: int = 0,
                 n_iter: int = TSNE_ITERS) -> ProjectionLayout:
    """Exact O(n^2) t-SNE to 2D with the standard schedule: early
    exaggeration x12 for 250 iterations, momentum 0.5 then 0.8 from
    iteration 250, 1000 iterations total."""
    X = np.asarray(codes, dtype=np.float64)
    n = X.shape[0]
    if n <= 3 * perplexity:
        raise ValueError(
            f"need more than {int(3 * perplexity)} points for perplexity "
            f"{perplexity}, got {n}")

    sq = np.square(X).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    P_cond = _conditional_probs(d2, perplexity)
    P = (P_cond + P_cond.T) / (2.0 * n)
    P = np.maximum(P, 1e-300)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    kl_initial = _kl_divergence(P, Y)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(n_iter):
        exag = TSNE_EARLY_EXAG if it < TSNE_EXAG_ITERS else 1.0
        Q, num = _low_dim_q(Y)
        W = (exag * P - Q) * num
        grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)
        momentum = 0.5 if it < TSNE_MOMENTUM_SWITCH else 0.8
        gains = np.where(np.sign(grad) != np.sign(update),
                         gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - TSNE_LR * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    kl_final = _kl_divergence(P, Y)

    dec = (np.asarray(decoded, dtype=np.float64) if decoded is not None
           else np.zeros((n, 256)))
    return ProjectionLayout(points=Y, codes=X, decoded=dec, seed=seed,
                            perplexity=perplexity,
                            kl_initial=kl_initial, kl_final=kl_final)


# -- layout queries --------------------------------------------------------


def grid_assign(layout: ProjectionLayout, rect) -> list[list[int]]:
    """Bin layout points inside `rect` = (x0, y0, x1, y1) into 4x4 cells.

    Returns 16 index lists in row-major order (top row = max y). Every
    contained point lands in exactly one cell."""
    x0, y0, x1, y1 = map(float, rect)
    x0, x1 = min(x0, x1), max(x0, x1)
    y0, y1 = min(y0, y1), max(y0, y1)
    cells: list[list[int]] = [[] for _ in range(GRID_N * GRID_N)]
    if x1 <= x0 or y1 <= y0:
        return cells
    pts = layout.points
    inside = ((pts[:, 0] >= x0) & (pts[:, 0] <= x1)
              & (pts[:, 1] >= y0) & (pts[:, 1] <= y1))
    for idx in np.flatnonzero(inside):
        cx = min(int((pts[idx, 0] - x0) / (x1 - x0) * GRID_N), GRID_N - 1)
        cy = min(int((pts[idx, 1] - y0) / (y1 - y0) * GRID_N), GRID_N - 1)
        row = GRID_N - 1 - cy      # top row first
        cells[row * GRID_N + cx].append(int(idx))
    return cells


def grid_synthesize(bundle: ModelBundle, layout: ProjectionLayout, rect,
                    view_encoded: np.ndarray, t_c: np.ndarray):
    """Per-cell mean codes decoded and synthesized in one batch.

    Returns a list of 16 dicts: {"empty": True} or
    {"empty": False, "mean_code", "t_o", "image"}."""
    cells = grid_assign(layout, rect)
    occupied = [i for i, members in enumerate(cells) if members]
    out = [{"empty": True} for _ in cells]
    if not occupied:
        return out
    mean_codes = np.stack([layout.codes[cells[i]].mean(axis=0)
                           for i in occupied])
    t_o = bundle.decode_tf(mean_codes.astype(np.float32))
    views = np.repeat(np.asarray(view_encoded, dtype=np.float32)[None],
                      len(occupied), axis=0)
    tcs = np.repeat(np.asarray(t_c, dtype=np.float32)[None],
                    len(occupied), axis=0)
    images = bundle.synthesize(views, t_o, tcs)
    for k, i in enumerate(occupied):
        out[i] = {"empty": False, "mean_code": mean_codes[k],
                  "t_o": t_o[k], "image": images[k]}
    return out


def shepard_interpolate(bundle: ModelBundle, layout: ProjectionLayout,
                        query, radius: float | None = None,
                        view_encoded: np.ndarray | None = None,
                        t_c: np.ndarray | None = None):
    """Gaussian Shepard interpolation of codes inside the query disk.

    Kernel bandwidth is radius/3; default radius is 5% of the layout
    bounding-box diagonal. Returns {"code", "t_o"} plus "image" when a view
    and color TF are supplied."""
    q = np.asarray(query, dtype=np.float64)
    r = layout.default_radius if radius is None else float(radius)
    if r <= 0:
        raise ValueError("radius must be positive")
    d2 = np.square(layout.points - q).sum(axis=1)
    inside = d2 <= r * r
    if not inside.any():
        raise NoNeighborsError("no layout points within the query radius")
    bw = r / 3.0
    w = np.exp(-d2[inside] / (2.0 * bw * bw))
    w = w / w.sum()
    code = w @ layout.codes[inside]
    t_o = bundle.decode_tf(code.astype(np.float32))
    result = {"code": code, "t_o": t_o, "weights": w,
              "indices": np.flatnonzero(inside)}
    if view_encoded is not None and t_c is not None:
        result["image"] = bundle.synthesize(
            np.asarray(view_encoded, dtype=np.float32),
            t_o.astype(np.float32), np.asarray(t_c, dtype=np.float32))
    return result
