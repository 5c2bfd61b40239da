"""Random visualization parameters and dataset materialization.

Opacity TFs are sums of 1-5 Gaussian modes with clamped amplitude; color TFs
place random Lab control colors at the GMM means and the scalar extrema
(bright at means, dark at extrema) and interpolate piecewise-linearly.

Datasets live in a directory: manifest.json, params.jsonl, and
images/{id}_color.png, images/{id}_opacity.png. Per-record seeds are derived
from a single global seed by counter-based splitting, so generation is
deterministic regardless of evaluation order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .renderer import (DIST_MAX, DIST_MIN, N_TF, PHI_MAX, PSI_MAX,
                       RenderConfig, Viewpoint, render)
from .volume import VolumeGrid

MAX_MODES = 5
SIGMA_RANGE = (0.01, 0.15)
AMP_RANGE = (0.1, 1.0)
MU_RANGE_DEFAULT = (0.05, 0.95)
LIGHTNESS_MODE = (60.0, 100.0)
LIGHTNESS_EXTREMA = (0.0, 30.0)
AB_RANGE = (-60.0, 60.0)


@dataclass(frozen=True)
class GmmSpec:
    means: tuple[float, ...]
    stds: tuple[float, ...]
    amplitudes: tuple[float, ...]

    def __post_init__(self):
        n = len(self.means)
        if not (1 <= n <= MAX_MODES):
            raise ValueError(f"mode count must be in 1..{MAX_MODES}, got {n}")
        if len(self.stds) != n or len(self.amplitudes) != n:
            raise ValueError("means/stds/amplitudes must have equal length")
        if any(s <= 0 for s in self.stds):
            raise ValueError("stds must be positive")

    @property
    def count(self) -> int:
        return len(self.means)

    def to_dict(self) -> dict:
        return {"means": list(self.means), "stds": list(self.stds),
                "amplitudes": list(self.amplitudes)}

    @staticmethod
    def from_dict(d: dict) -> "GmmSpec":
        return GmmSpec(tuple(d["means"]), tuple(d["stds"]), tuple(d["amplitudes"]))


def evaluate_gmm_tf(spec: GmmSpec) -> np.ndarray:
    """Sample the clamped mode sum on the 256-bin scalar grid."""
    x = np.arange(N_TF) / (N_TF - 1)
    t = np.zeros(N_TF)
    for mu, sd, a in zip(spec.means, spec.stds, spec.amplitudes):
        t += a * np.exp(-((x - mu) ** 2) / (2 * sd * sd))
    return np.clip(t, 0.0, 1.0)


def sample_viewpoint(rng: np.random.Generator) -> Viewpoint:
    return Viewpoint(
        azimuth=rng.uniform(0.0, 2 * np.pi),
        elevation=rng.uniform(-PHI_MAX, PHI_MAX),
        roll=rng.uniform(-PSI_MAX, PSI_MAX),
        distance=rng.uniform(DIST_MIN, DIST_MAX),
    )


def sample_opacity_tf(rng: np.random.Generator,
                      mu_range=MU_RANGE_DEFAULT) -> tuple[GmmSpec, np.ndarray]:
    n = int(rng.integers(1, MAX_MODES + 1))
    spec = GmmSpec(
        means=tuple(rng.uniform(*mu_range) for _ in range(n)),
        stds=tuple(rng.uniform(*SIGMA_RANGE) for _ in range(n)),
        amplitudes=tuple(rng.uniform(*AMP_RANGE) for _ in range(n)),
    )
    return spec, evaluate_gmm_tf(spec)


def sample_color_tf(rng: np.random.Generator, spec: GmmSpec) -> np.ndarray:
    """Lab color TF (3, 256): bright random colors at GMM means, dark colors
    at the scalar extrema, piecewise-linear in between."""
    points: dict[float, np.ndarray] = {}
    points[0.0] = np.array([rng.uniform(*LIGHTNESS_EXTREMA),
                            rng.uniform(*AB_RANGE), rng.uniform(*AB_RANGE)])
    for mu in spec.means:
        c = np.array([rng.uniform(*LIGHTNESS_MODE),
                      rng.uniform(*AB_RANGE), rng.uniform(*AB_RANGE)])
        points[float(np.clip(mu, 0.0, 1.0))] = c  # duplicate means merge
    points[1.0] = np.array([rng.uniform(*LIGHTNESS_EXTREMA),
                            rng.uniform(*AB_RANGE), rng.uniform(*AB_RANGE)])
    xs = sorted(points)
    ctrl = np.stack([points[x] for x in xs])
    grid = np.arange(N_TF) / (N_TF - 1)
    t_c = np.stack([np.interp(grid, xs, ctrl[:, ch]) for ch in range(3)])
    return t_c


@dataclass
class DatasetManifest:
    volume_ref: str
    seed: int
    count: int
    color_size: int
    opacity_size: int
    illumination: str
    mu_range: tuple[float, float]
    train_ids: list[int]
    holdout_ids: list[int]
    valid: bool = True

    def to_dict(self) -> dict:
        return {
            "volume_ref": self.volume_ref, "seed": self.seed, "count": self.count,
            "color_size": self.color_size, "opacity_size": self.opacity_size,
            "illumination": self.illumination, "mu_range": list(self.mu_range),
            "train_ids": self.train_ids, "holdout_ids": self.holdout_ids,
            "valid": self.valid,
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetManifest":
        return DatasetManifest(
            d["volume_ref"], d["seed"], d["count"], d["color_size"],
            d["opacity_size"], d["illumination"], tuple(d["mu_range"]),
            list(d["train_ids"]), list(d["holdout_ids"]), d.get("valid", True),
        )

    @staticmethod
    def load(dataset_dir: str) -> "DatasetManifest":
        with open(os.path.join(dataset_dir, "manifest.json")) as f:
            return DatasetManifest.from_dict(json.load(f))


def split_holdout(n: int, requested: int = 2000) -> tuple[list[int], list[int]]:
    """Hold out min(requested, 10% of n), assigned to the trailing ids."""
    k = min(requested, n // 10)
    ids = list(range(n))
    return ids[: n - k], ids[n - k:]


def record_rng(seed: int, record_id: int) -> np.random.Generator:
    """Counter-based per-record stream; independent of generation order."""
    return np.random.Generator(np.random.Philox(key=seed, counter=record_id))


def sample_record_params(seed: int, record_id: int, mu_range=MU_RANGE_DEFAULT):
    rng = record_rng(seed, record_id)
    view = sample_viewpoint(rng)
    spec, t_o = sample_opacity_tf(rng, mu_range)
    t_c = sample_color_tf(rng, spec)
    return view, spec, t_o, t_c


def save_gray_png(img: np.ndarray, path: str) -> None:
    Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8), "L").save(path)


def save_rgb_png(img: np.ndarray, path: str) -> None:
    Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8), "RGB").save(path)


def load_png(path: str) -> np.ndarray:
    return np.asarray(Image.open(path), dtype=np.float64) / 255.0


def generate_dataset(vol: VolumeGrid, n: int, out_dir: str, seed: int,
                     color_size: int = 64, opacity_size: int = 64,
                     illumination: str = "none",
                     mu_range=MU_RANGE_DEFAULT,
                     holdout: int = 2000,
                     volume_ref: str = "synthetic",
                     progress=None) -> DatasetManifest:
    """Render n samples and write the dataset directory. Resumable: records
    whose images already exist are skipped (parameters are re-derived from the
    per-record seed, so params.jsonl is always rewritten identically)."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    cfg_color = RenderConfig(size=(color_size, color_size), illumination=illumination)
    cfg_op = RenderConfig(size=(opacity_size, opacity_size), illumination="none")

    records = []
    for i in range(n):
        view, spec, t_o, t_c = sample_record_params(seed, i, mu_range)
        color_path = os.path.join(img_dir, f"{i}_color.png")
        op_path = os.path.join(img_dir, f"{i}_opacity.png")
        if not (os.path.exists(color_path) and os.path.exists(op_path)):
            color, _ = render(vol, view, t_o, t_c, cfg_color)
            _, opacity = render(vol, view, t_o, t_c, cfg_op)
            save_rgb_png(color, color_path)
            save_gray_png(opacity, op_path)
        records.append({
            "id": i,
            "view": [view.azimuth, view.elevation, view.roll, view.distance],
            "view_encoded": [float(x) for x in view.encode()],
            "gmm": spec.to_dict(),
            "t_o": [round(float(x), 8) for x in t_o],
            "t_c": [[round(float(x), 8) for x in row] for row in t_c],
            "color_image": f"images/{i}_color.png",
            "opacity_image": f"images/{i}_opacity.png",
        })
        if progress is not None:
            progress(i, n)

    with open(os.path.join(out_dir, "params.jsonl"), "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")

    train_ids, holdout_ids = split_holdout(n, holdout)
    manifest = DatasetManifest(
        volume_ref=volume_ref, seed=seed, count=n, color_size=color_size,
        opacity_size=opacity_size, illumination=illumination,
        mu_range=tuple(mu_range), train_ids=train_ids, holdout_ids=holdout_ids,
    )
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest.to_dict(), f, indent=1)
    return manifest


def load_records(dataset_dir: str) -> list[dict]:
    with open(os.path.join(dataset_dir, "params.jsonl")) as f:
        return [json.loads(line) for line in f if line.strip()]
