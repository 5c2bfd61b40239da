"""Shared fixtures.

The `toy` fixture builds the full desk-scale artifact chain once per session:
synthetic volume, rendered dataset (2,000 train / 200 hold-out), both trained
GAN stages, and a latent layout. It is cached on disk (VOLGEN_TOY_CACHE,
default /tmp/volgen_toy_cache) so repeated runs skip the ~55 minute training;
delete the cache directory for a fresh timed run.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np
import pytest

from volgen.checkpoint import load_checkpoint, save_checkpoint
from volgen.nets import (ModelBundle, OpacityGanConfig, TrainingData,
                         TranslationGanConfig, train_opacity_gan,
                         train_translation_gan)
from volgen.paramgen import generate_dataset
from volgen.volume import two_shell_volume

TOY_SEED = 7
TOY_TRAIN_SEED = 11
TOY_COUNT = 2200            # 2,000 train + 200 hold-out
TOY_OPACITY_SIZE = 32
TOY_COLOR_SIZE = 64
TOY_LATENT_DIM = 8
TOY_OPACITY_EPOCHS = 30
TOY_TRANSLATION_EPOCHS = 12

TOY_OPACITY_CFG = dict(
    latent_dim=TOY_LATENT_DIM, image_size=TOY_OPACITY_SIZE,
    tf_channels=(8, 16, 32, 64), gen_channels=(64, 48, 32),
    disc_channels=(16, 32, 64), epochs=TOY_OPACITY_EPOCHS,
    lr=1e-3, d_lr=1e-4, lr_halve_every=10)
TOY_TRANSLATION_CFG = dict(
    out_size=TOY_COLOR_SIZE, opacity_size=TOY_OPACITY_SIZE,
    tf_channels=(8, 16, 32, 64), enc_channels=(32, 64), fuse_channels=96,
    dec_channels=(48, 32, 16), disc_channels=(32, 64, 128, 128),
    epochs=TOY_TRANSLATION_EPOCHS,
    lr=3e-4, d_lr=1e-5, lr_halve_every=10)


def toy_cache_dir() -> str:
    return os.environ.get("VOLGEN_TOY_CACHE", "/tmp/volgen_toy_cache")


class ToyArtifacts:
    def __init__(self, cache: str):
        self.dir = cache
        self.dataset_dir = os.path.join(cache, "dataset")
        self.ckpt_path = os.path.join(cache, "model.vgan")
        self.record_path = os.path.join(cache, "record.json")
        self._data = None
        self._bundle = None

    @property
    def data(self) -> TrainingData:
        if self._data is None:
            self._data = TrainingData(self.dataset_dir)
        return self._data

    @property
    def bundle(self) -> ModelBundle:
        if self._bundle is None:
            self._bundle, _ = load_checkpoint(self.ckpt_path)
        return self._bundle

    @property
    def record(self) -> dict:
        with open(self.record_path) as f:
            return json.load(f)


def build_toy(cache: str) -> ToyArtifacts:
    toy = ToyArtifacts(cache)
    if os.path.exists(toy.record_path) and os.path.exists(toy.ckpt_path):
        return toy
    os.makedirs(cache, exist_ok=True)
    t0 = time.time()
    vol = two_shell_volume()
    generate_dataset(vol, TOY_COUNT, toy.dataset_dir, seed=TOY_SEED,
                     color_size=TOY_COLOR_SIZE,
                     opacity_size=TOY_OPACITY_SIZE, holdout=200,
                     volume_ref="two-shell")
    dataset_s = time.time() - t0
    data = TrainingData(toy.dataset_dir)

    t1 = time.time()
    op_cfg = OpacityGanConfig(**TOY_OPACITY_CFG)
    bundle, op_log = train_opacity_gan(data, op_cfg, seed=TOY_TRAIN_SEED)
    tr_cfg = TranslationGanConfig(**TOY_TRANSLATION_CFG)
    bundle, tr_log = train_translation_gan(data, bundle, tr_cfg,
                                           seed=TOY_TRAIN_SEED)
    train_s = time.time() - t1
    save_checkpoint(bundle, toy.ckpt_path)

    record = {
        "dataset_s": dataset_s,
        "train_s": train_s,
        "total_s": time.time() - t0,
        "opacity_epochs": op_cfg.epochs,
        "translation_epochs": tr_cfg.epochs,
        "opacity_d_acc": [e["d_accuracy"] for e in op_log
                          if e.get("epoch_end")],
        "translation_d_acc": [e["d_accuracy"] for e in tr_log
                              if e.get("epoch_end")],
    }
    with open(toy.record_path, "w") as f:
        json.dump(record, f, indent=1)
    return toy


@pytest.fixture(scope="session")
def toy() -> ToyArtifacts:
    return build_toy(toy_cache_dir())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def tiny_bundle(seed: int = 3, latent_dim: int = 4,
                weight_std: float | None = None,
                dtype=np.float32) -> ModelBundle:
    """A small two-stage model with trained flags set, for oracle tests.

    `weight_std` re-draws every parameter at that scale so gradients are
    large enough for finite-difference comparison."""
    op = OpacityGanConfig(latent_dim=latent_dim, image_size=16,
                          tf_channels=(4, 8), gen_channels=(8, 8),
                          disc_channels=(8, 16), fc_dim=64)
    tr = TranslationGanConfig(out_size=16, opacity_size=16, enc_channels=(8,),
                              fuse_channels=16, residual_blocks=1,
                              dec_channels=(8,), disc_channels=(8, 16),
                              tf_channels=(4, 8), fc_dim=64)
    bundle = ModelBundle.build(op, tr, seed=seed)
    bundle.opacity_trained = True
    bundle.translation_trained = True
    draw = np.random.default_rng(seed + 1)
    for _, p in bundle.named_parameters():
        if weight_std is not None:
            p.data = draw.normal(0.0, weight_std, p.data.shape)
        p.data = p.data.astype(dtype)
    return bundle


def random_tf_inputs(rng: np.random.Generator):
    """A random (encoded view, opacity TF, Lab color TF) triple."""
    view = rng.standard_normal(5)
    t_o = rng.random(256)
    t_c = np.stack([rng.uniform(0, 100, 256),
                    rng.uniform(-60, 60, 256),
                    rng.uniform(-60, 60, 256)])
    return view, t_o, t_c
