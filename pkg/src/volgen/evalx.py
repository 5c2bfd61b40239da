"""Quantitative evaluation: image RMSE, color-histogram earth mover's
distance, hold-out evaluation, the four-variant baseline comparison, and the
latent-dimension / l1-weight study harnesses.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .nets import (ModelBundle, OpacityGanConfig, TranslationGanConfig,
                   TrainingData, train_opacity_gan, train_translation_gan)

DEFAULT_BINS = 8


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean squared error over all pixels and channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass
class ColorHistogram:
    """Joint 3-D histogram over sRGB with `bins` bins per channel.

    `mass` sums to 1; `centers` holds each occupied bin's center in the unit
    RGB cube (only nonzero bins are stored)."""

    mass: np.ndarray
    centers: np.ndarray
    bins: int = DEFAULT_BINS

    @staticmethod
    def of_image(img: np.ndarray, bins: int = DEFAULT_BINS) -> "ColorHistogram":
        px = np.asarray(img, dtype=np.float64).reshape(-1, 3)
        idx = np.minimum((np.clip(px, 0.0, 1.0) * bins).astype(int), bins - 1)
        flat = (idx[:, 0] * bins + idx[:, 1]) * bins + idx[:, 2]
        counts = np.bincount(flat, minlength=bins ** 3).astype(np.float64)
        occupied = np.flatnonzero(counts)
        r, rem = np.divmod(occupied, bins * bins)
        g, b = np.divmod(rem, bins)
        centers = (np.stack([r, g, b], axis=1) + 0.5) / bins
        return ColorHistogram(mass=counts[occupied] / counts.sum(),
                              centers=centers, bins=bins)


def transport_distance(mass_a: np.ndarray, centers_a: np.ndarray,
                       mass_b: np.ndarray, centers_b: np.ndarray,
                       ground: np.ndarray | None = None) -> float:
    """Exact optimal-transport cost between two normalized mass vectors.

    Solved as an LP (HiGHS) over the full transport plan; `ground` overrides
    the Euclidean cost matrix."""
    a = np.asarray(mass_a, dtype=np.float64)
    b = np.asarray(mass_b, dtype=np.float64)
    if ground is None:
        diff = centers_a[:, None, :] - centers_b[None, :, :]
        ground = np.sqrt(np.square(diff).sum(axis=2))
    n, m = ground.shape
    # row-sum and column-sum equality constraints over the n*m plan
    rows_i = np.repeat(np.arange(n), m)
    cols_i = np.tile(np.arange(m), n) + n
    var = np.arange(n * m)
    A = sparse.coo_matrix(
        (np.ones(2 * n * m),
         (np.concatenate([rows_i, cols_i]), np.concatenate([var, var]))),
        shape=(n + m, n * m)).tocsr()
    rhs = np.concatenate([a, b])
    res = linprog(ground.reshape(-1), A_eq=A, b_eq=rhs,
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def color_emd(a: np.ndarray, b: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Earth mover's distance between the images' color histograms.

    Ground distance is Euclidean between bin centers, scaled so the largest
    possible cost (opposite corner bins) is exactly 1; the result lies in
    [0, 1]."""
    if np.asarray(a).shape != np.asarray(b).shape:
        raise ValueError("images must have equal shapes")
    ha = ColorHistogram.of_image(a, bins)
    hb = ColorHistogram.of_image(b, bins)
    diff = ha.centers[:, None, :] - hb.centers[None, :, :]
    max_cost = np.sqrt(3.0) * (bins - 1) / bins
    ground = np.sqrt(np.square(diff).sum(axis=2)) / max_cost
    return transport_distance(ha.mass, ha.centers, hb.mass, hb.centers, ground)


@dataclass
class EvalReport:
    label: str
    dataset: str
    config: dict = field(default_factory=dict)
    rmse_per_sample: list = field(default_factory=list)
    emd_per_sample: list = field(default_factory=list)

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.rmse_per_sample))

    @property
    def mean_emd(self) -> float:
        return float(np.mean(self.emd_per_sample))

    def to_dict(self) -> dict:
        return {"label": self.label, "dataset": self.dataset,
                "config": self.config,
                "mean_rmse": self.mean_rmse, "mean_emd": self.mean_emd,
                "rmse_per_sample": self.rmse_per_sample,
                "emd_per_sample": self.emd_per_sample}

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)


def _holdout_truth(data: TrainingData) -> np.ndarray:
    """Hold-out color images as (K, h, w, 3) in [0, 1]."""
    colors = data.color_images()[data.holdout_ids]
    return np.transpose((colors + 1.0) / 2.0, (0, 2, 3, 1)).astype(np.float64)


def _synthesize_holdout(bundle: ModelBundle, data: TrainingData,
                        batch: int = 64) -> np.ndarray:
    ids = np.array(data.holdout_ids)
    out = []
    for s in range(0, len(ids), batch):
        sel = ids[s:s + batch]
        out.append(bundle.synthesize(data.views[sel], data.t_o[sel],
                                     data.t_c_lab[sel]))
    return np.concatenate(out, axis=0)


def evaluate_holdout(bundle: ModelBundle, data: TrainingData,
                     label: str = "gan_l1",
                     predictions: np.ndarray | None = None) -> EvalReport:
    """Per-sample and mean RMSE / color EMD over the hold-out split.

    `predictions` overrides synthesis (used for baselines and the
    ground-truth-as-prediction oracle)."""
    truth = _holdout_truth(data)
    if predictions is None:
        predictions = _synthesize_holdout(bundle, data)
    if predictions.shape != truth.shape:
        raise ValueError("prediction batch does not match hold-out shape")
    report = EvalReport(label=label, dataset=data.dir)
    for pred, gt in zip(predictions, truth):
        report.rmse_per_sample.append(rmse(pred, gt))
        report.emd_per_sample.append(color_emd(pred, gt))
    return report


# -- baselines -------------------------------------------------------------


def parameter_vectors(data: TrainingData) -> np.ndarray:
    """Concatenated (view, t_o, t_c-Lab/100) rows for parameter-space NN."""
    return np.concatenate(
        [data.views, data.t_o,
         data.t_c_lab.reshape(len(data.views), -1) / 100.0],
        axis=1).astype(np.float64)


def nearest_training_predictions(data: TrainingData) -> tuple[np.ndarray, np.ndarray]:
    """For each hold-out sample, the training image whose parameters are
    nearest in Euclidean distance. Returns (images, chosen train indices)."""
    vecs = parameter_vectors(data)
    train = np.array(data.train_ids)
    hold = np.array(data.holdout_ids)
    t_vec, h_vec = vecs[train], vecs[hold]
    t_sq = np.square(t_vec).sum(axis=1)
    colors = data.color_images()
    picks = np.empty(len(hold), dtype=int)
    for i, hv in enumerate(h_vec):
        d2 = t_sq - 2.0 * (t_vec @ hv) + hv @ hv
        picks[i] = train[int(np.argmin(d2))]
    imgs = np.transpose((colors[picks] + 1.0) / 2.0, (0, 2, 3, 1))
    return imgs.astype(np.float64), picks


def mean_image_predictions(data: TrainingData) -> np.ndarray:
    """The constant mean-of-training-images predictor."""
    colors = data.color_images()[data.train_ids]
    mean = np.transpose((colors.mean(axis=0) + 1.0) / 2.0, (1, 2, 0))
    return np.repeat(mean[None], len(data.holdout_ids), axis=0).astype(np.float64)


def random_training_predictions(data: TrainingData, seed: int = 0) -> np.ndarray:
    """Uniformly drawn training images, one per hold-out sample."""
    rng = np.random.default_rng(seed)
    picks = rng.choice(data.train_ids, size=len(data.holdout_ids))
    colors = data.color_images()[picks]
    return np.transpose((colors + 1.0) / 2.0, (0, 2, 3, 1)).astype(np.float64)


def baseline_suite(variants: dict, data: TrainingData) -> list[EvalReport]:
    """Evaluate model variants plus the parameter-space nearest-neighbor
    baseline. `variants` maps label -> trained ModelBundle."""
    nn_imgs, _ = nearest_training_predictions(data)
    reports = [evaluate_holdout(None, data, label="nearest_neighbor",
                                predictions=nn_imgs)]
    for label, bundle in variants.items():
        reports.append(evaluate_holdout(bundle, data, label=label))
    return reports


def write_comparison_table(reports: list[EvalReport], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "mean_rmse", "mean_emd", "n_samples"])
        for r in reports:
            w.writerow([r.label, f"{r.mean_rmse:.6f}", f"{r.mean_emd:.6f}",
                        len(r.rmse_per_sample)])


# -- study harnesses -------------------------------------------------------


def study_harness(kind: str, data: TrainingData,
                  opacity_cfg: OpacityGanConfig,
                  translation_cfg: TranslationGanConfig,
                  seed: int = 0, out_dir: str | None = None,
                  trained_opacity: ModelBundle | None = None) -> list[EvalReport]:
    """Train and evaluate one configuration per study value.

    kind="latent_dim": latent dimension in {4, 8, 16, 32, 64} at 64x64 color
    output with the l1 term disabled. kind="lambda": l1 weight in
    {50, 150, 450}, reusing `trained_opacity` when given."""
    if kind == "latent_dim":
        values = [4, 8, 16, 32, 64]
    elif kind == "lambda":
        values = [50.0, 150.0, 450.0]
    else:
        raise ValueError(f"unknown study kind {kind!r}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    reports = []
    for value in values:
        label = f"{kind}={value:g}" if kind == "lambda" else f"{kind}={value}"
        if kind == "latent_dim":
            op_cfg = replace(opacity_cfg, latent_dim=value)
            tr_cfg = replace(translation_cfg, out_size=64,
                             lambda_l1=0.0, mode="gan_only")
            bundle, _ = train_opacity_gan(data, op_cfg, seed)
        else:
            op_cfg = opacity_cfg
            tr_cfg = replace(translation_cfg, lambda_l1=value, mode="gan_l1")
            if trained_opacity is not None:
                bundle = ModelBundle.build(op_cfg, seed=seed)
                _copy_opacity(trained_opacity, bundle)
            else:
                bundle, _ = train_opacity_gan(data, op_cfg, seed)
        bundle, _ = train_translation_gan(data, bundle, tr_cfg, seed)
        report = evaluate_holdout(bundle, data, label=label)
        report.config = {"opacity": op_cfg.__dict__, "translation": tr_cfg.__dict__}
        reports.append(report)
        if out_dir:
            from .checkpoint import save_checkpoint
            save_checkpoint(bundle, os.path.join(out_dir, f"{label}.vgan"))
            report.save(os.path.join(out_dir, f"{label}.json"))
    if out_dir:
        write_comparison_table(reports, os.path.join(out_dir, f"{kind}_study.csv"))
    return reports


def _copy_opacity(src: ModelBundle, dst: ModelBundle) -> None:
    for (_, p_src), (_, p_dst) in zip(src.g_o.named_parameters(),
                                      dst.g_o.named_parameters()):
        p_dst.data = p_src.data.copy()
    for (_, b_src), (_, b_dst) in zip(src.g_o.named_buffers(),
                                      dst.g_o.named_buffers()):
        b_dst[...] = b_src
    dst.opacity_trained = src.opacity_trained
