"""The two-stage conditional GAN: an opacity GAN mapping (view, opacity TF)
to an opacity image with a TF autoencoder defining the latent space, and an
opacity-to-color translation GAN producing the final color image.

Networks consume the encoded 5-vector view, TFs raw in [0, 1] (color TF Lab
channels scaled to roughly unit range), and images normalized to [-1, 1]
for the tanh heads.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .tensor import (Activation, Adam, BatchNorm2d, Conv1d, Conv2d, Linear,
                     Module, Sequential, Tensor, bce_loss, concat, l1_loss,
                     tile_spatial, upsample_nearest2)
from .paramgen import load_records, DatasetManifest, load_png

N_TF = 256
VIEW_DIM = 5


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries a diagnostic snapshot."""

    def __init__(self, msg: str, snapshot: dict):
        super().__init__(msg)
        self.snapshot = snapshot


class UntrainedModelError(RuntimeError):
    pass


def _stages_for(size: int, base: int = 4) -> int:
    n = 0
    while base << n < size:
        n += 1
    return n


@dataclass
class OpacityGanConfig:
    latent_dim: int = 8
    image_size: int = 64
    tf_channels: tuple = (16, 32, 64, 128)
    gen_channels: tuple = ()       # one per upsample stage; default derived
    disc_channels: tuple = ()      # one per downsample stage; default derived
    fc_dim: int = 512
    lr: float = 2e-4
    d_lr: float | None = None      # discriminator lr; defaults to lr
    lr_halve_every: int = 5
    batch_size: int = 64
    epochs: int = 25

    def __post_init__(self):
        if self.latent_dim not in (4, 8, 16, 32, 64):
            raise ValueError("latent_dim must be one of {4, 8, 16, 32, 64}")
        if self.image_size & (self.image_size - 1):
            raise ValueError("image_size must be a power of two")
        n_up = _stages_for(self.image_size)
        if not self.gen_channels:
            self.gen_channels = tuple([64] * max(0, n_up - 2) + [32, 16][-n_up:])
        if len(self.gen_channels) != n_up:
            raise ValueError(f"gen_channels needs {n_up} entries")
        n_dn = _stages_for(self.image_size)
        if not self.disc_channels:
            self.disc_channels = tuple(32 << i for i in range(n_dn))
        if len(self.disc_channels) != n_dn:
            raise ValueError(f"disc_channels needs {n_dn} entries")


@dataclass
class TranslationGanConfig:
    out_size: int = 256
    opacity_size: int = 64
    lambda_l1: float = 150.0
    mode: str = "gan_l1"           # "gan_l1" | "gan_only" | "l1_only"
    enc_channels: tuple = ()       # opacity-image encoder, down to 8x8
    fuse_channels: int = 128
    residual_blocks: int = 4
    dec_channels: tuple = ()       # one per upsample stage 8 -> out_size
    disc_channels: tuple = ()
    tf_channels: tuple = (16, 32, 64, 128)
    fc_dim: int = 512
    lr: float = 8e-5
    d_lr: float | None = None      # discriminator lr; defaults to lr
    lr_halve_every: int = 8
    batch_size: int = 50
    epochs: int = 24

    def __post_init__(self):
        if self.out_size < self.opacity_size:
            raise ValueError("out_size must be >= opacity_size")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if self.mode not in ("gan_l1", "gan_only", "l1_only"):
            raise ValueError(f"unknown mode {self.mode!r}")
        n_enc = _stages_for(self.opacity_size, base=8)
        if not self.enc_channels:
            self.enc_channels = tuple(32 << i for i in range(n_enc))
        if len(self.enc_channels) != n_enc:
            raise ValueError(f"enc_channels needs {n_enc} entries")
        n_dec = _stages_for(self.out_size, base=8)
        if not self.dec_channels:
            self.dec_channels = tuple(
                max(16, self.fuse_channels >> (i + 1)) for i in range(n_dec))
        if len(self.dec_channels) != n_dec:
            raise ValueError(f"dec_channels needs {n_dec} entries")
        n_dn = _stages_for(self.out_size)
        if not self.disc_channels:
            self.disc_channels = tuple(min(256, 32 << i) for i in range(n_dn))
        if len(self.disc_channels) != n_dn:
            raise ValueError(f"disc_channels needs {n_dn} entries")


# -- building blocks ------------------------------------------------------


class TfConvBranch(Module):
    """1D conv stack (width 5, stride 2) collapsing a (B, c, 256) signal to a
    flat feature; shared shape for the TF encoder and discriminator branches."""

    def __init__(self, in_channels: int, channels: tuple, out_dim: int,
                 rng, activation: str = "relu"):
        super().__init__()
        layers = []
        c_prev = in_channels
        n = N_TF
        for c in channels:
            layers.append(Conv1d(c_prev, c, 5, rng, stride=2, pad=2))
            layers.append(Activation(activation))
            c_prev = c
            n = (n + 2 * 2 - 5) // 2 + 1
        self.convs = Sequential(*layers)
        self.flat_dim = c_prev * n
        self.fc = Linear(self.flat_dim, out_dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = self.convs(x)
        return self.fc(h.reshape(h.shape[0], self.flat_dim))


class TfDecoder(Module):
    """Latent -> 256-sample opacity TF through two FC layers, sigmoid head."""

    def __init__(self, latent_dim: int, rng, hidden: int = 128):
        super().__init__()
        self.fc1 = Linear(latent_dim, hidden, rng)
        self.fc2 = Linear(hidden, N_TF, rng)

    def forward(self, z: Tensor) -> Tensor:
        return self.fc2(self.fc1(z).relu()).sigmoid()


class UpStage(Module):
    """Upsample x2 then conv-BN-ReLU with a residual projection of the
    upsampled input (1x1 conv when channel counts differ)."""

    def __init__(self, c_in: int, c_out: int, rng):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, rng, stride=1, pad=1)
        self.bn = BatchNorm2d(c_out, rng)
        self.proj = Conv2d(c_in, c_out, 1, rng) if c_in != c_out else None

    def forward(self, x: Tensor) -> Tensor:
        up = upsample_nearest2(x)
        y = self.bn(self.conv(up))
        skip = self.proj(up) if self.proj is not None else up
        return (y + skip).relu()


class ResBlock(Module):
    def __init__(self, ch: int, rng):
        super().__init__()
        self.conv1 = Conv2d(ch, ch, 3, rng, stride=1, pad=1)
        self.bn1 = BatchNorm2d(ch, rng)
        self.conv2 = Conv2d(ch, ch, 3, rng, stride=1, pad=1)
        self.bn2 = BatchNorm2d(ch, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = self.bn1(self.conv1(x)).relu()
        return (self.bn2(self.conv2(h)) + x).relu()


# -- opacity GAN ----------------------------------------------------------


class OpacityGenerator(Module):
    def __init__(self, cfg: OpacityGanConfig, rng):
        super().__init__()
        self.cfg = cfg
        self.encoder = TfConvBranch(1, cfg.tf_channels, cfg.latent_dim, rng)
        self.decoder = TfDecoder(cfg.latent_dim, rng)
        self.view_fc = Linear(VIEW_DIM, cfg.fc_dim, rng)
        self.latent_fc = Linear(cfg.latent_dim, cfg.fc_dim, rng)
        ch0 = cfg.gen_channels[0]
        self.fuse_fc = Linear(2 * cfg.fc_dim, ch0 * 4 * 4, rng)
        stages = []
        c_prev = ch0
        for c in cfg.gen_channels:
            stages.append(UpStage(c_prev, c, rng))
            c_prev = c
        self.stages = stages
        self.head = Conv2d(c_prev, 1, 3, rng, stride=1, pad=1)

    def encode(self, t_o: Tensor) -> Tensor:
        return self.encoder(t_o.reshape(t_o.shape[0], 1, N_TF))

    def forward(self, v: Tensor, t_o: Tensor):
        """Returns (opacity image in [-1, 1], latent code, reconstructed TF)."""
        z = self.encode(t_o)
        recon = self.decoder(z)
        hv = self.view_fc(v).relu()
        # while training, the autoencoder alone shapes the latent space: the
        # image branch reads the code but its adversarial gradient stops
        # here; at inference the full code->image dependency must stay
        # differentiable for the sensitivity analysis
        hz = self.latent_fc(z.detach() if self.training else z).relu()
        h = self.fuse_fc(concat([hv, hz], axis=1)).relu()
        ch0 = self.cfg.gen_channels[0]
        x = h.reshape(h.shape[0], ch0, 4, 4)
        for stage in self.stages:
            x = stage(x)
        return self.head(x).tanh(), z, recon


class OpacityDiscriminator(Module):
    def __init__(self, cfg: OpacityGanConfig, rng):
        super().__init__()
        layers = []
        c_prev = 1
        size = cfg.image_size
        for i, c in enumerate(cfg.disc_channels):
            layers.append(Conv2d(c_prev, c, 4, rng, stride=2, pad=1))
            if i > 0:
                layers.append(BatchNorm2d(c, rng))
            layers.append(Activation("leaky_relu"))
            c_prev = c
            size //= 2
        self.img_convs = Sequential(*layers)
        self.img_flat = c_prev * size * size
        self.view_fc = Linear(VIEW_DIM, cfg.fc_dim, rng)
        self.tf_branch = TfConvBranch(1, cfg.tf_channels, cfg.fc_dim, rng,
                                      activation="leaky_relu")
        self.final = Linear(self.img_flat + 2 * cfg.fc_dim, 1, rng)

    def forward(self, v: Tensor, t_o: Tensor, img: Tensor) -> Tensor:
        hi = self.img_convs(img)
        hi = hi.reshape(hi.shape[0], self.img_flat)
        hv = self.view_fc(v).leaky_relu()
        ht = self.tf_branch(t_o.reshape(t_o.shape[0], 1, N_TF)).leaky_relu()
        return self.final(concat([hi, hv, ht], axis=1)).sigmoid()


def build_opacity_gan(cfg: OpacityGanConfig, seed: int = 0):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0A]))
    g = OpacityGenerator(cfg, rng)
    d = OpacityDiscriminator(cfg, rng)
    return g, d


# -- translation GAN ------------------------------------------------------


class TranslationGenerator(Module):
    def __init__(self, cfg: TranslationGanConfig, opacity_encoder: TfConvBranch,
                 latent_dim: int, rng):
        super().__init__()
        self.cfg = cfg
        # shared frozen encoder; excluded from this module's parameters
        self._frozen_encoder = [opacity_encoder]
        enc = []
        c_prev = 1
        for c in cfg.enc_channels:
            enc.append(Sequential(Conv2d(c_prev, c, 4, rng, stride=2, pad=1),
                                  Activation("relu")))
            c_prev = c
        self.enc_stages = enc
        self.view_fc = Linear(VIEW_DIM, cfg.fc_dim, rng)
        self.color_branch = TfConvBranch(3, cfg.tf_channels, cfg.fc_dim, rng)
        self.latent_fc = Linear(latent_dim, cfg.fc_dim, rng)
        # feature fusion: tiled visualization features concatenated as channels
        self.feat_fc = Linear(3 * cfg.fc_dim, cfg.fuse_channels, rng)
        self.merge = Conv2d(c_prev + cfg.fuse_channels, cfg.fuse_channels, 3,
                            rng, stride=1, pad=1)
        self.merge_bn = BatchNorm2d(cfg.fuse_channels, rng)
        self.res_blocks = [ResBlock(cfg.fuse_channels, rng)
                           for _ in range(cfg.residual_blocks)]
        # decoder: 8 -> out_size; skip concat while resolution <= opacity_size
        dec = []
        c_run = cfg.fuse_channels
        res = 8
        skip_chs = self._skip_channels()
        for c in cfg.dec_channels:
            dec.append(Sequential(Conv2d(c_run, c, 3, rng, stride=1, pad=1),
                                  BatchNorm2d(c, rng), Activation("relu")))
            res *= 2
            c_run = c + skip_chs.get(res, 0)
        self.dec_stages = dec
        self.head = Conv2d(c_run, 3, 3, rng, stride=1, pad=1)

    def _skip_channels(self) -> dict:
        """Encoder feature channels keyed by spatial resolution (the raw
        opacity image itself is the skip at full opacity resolution)."""
        out = {self.cfg.opacity_size: 1}
        res = self.cfg.opacity_size
        for c in self.cfg.enc_channels[:-1]:
            res //= 2
            out[res] = c
        return out

    @property
    def opacity_encoder(self) -> TfConvBranch:
        return self._frozen_encoder[0]

    def forward(self, op_img: Tensor, v: Tensor, t_o: Tensor,
                t_c: Tensor) -> Tensor:
        skips = {self.cfg.opacity_size: op_img}
        x = op_img
        res = self.cfg.opacity_size
        for stage in self.enc_stages:
            x = stage(x)
            res //= 2
            if res > 8:
                skips[res] = x
        hv = self.view_fc(v).relu()
        hc = self.color_branch(t_c).relu()
        z = self.opacity_encoder(t_o.reshape(t_o.shape[0], 1, N_TF))
        hz = self.latent_fc(z).relu()
        feat = self.feat_fc(concat([hv, hc, hz], axis=1)).relu()
        tiled = tile_spatial(feat, 8, 8)
        y = self.merge_bn(self.merge(concat([x, tiled], axis=1))).relu()
        for block in self.res_blocks:
            y = block(y)
        res = 8
        for stage in self.dec_stages:
            y = upsample_nearest2(y)
            y = stage(y)
            res *= 2
            if res in skips:
                y = concat([y, skips[res]], axis=1)
        return self.head(y).tanh()


class TranslationDiscriminator(Module):
    def __init__(self, cfg: TranslationGanConfig, rng):
        super().__init__()
        layers = []
        c_prev = 3
        size = cfg.out_size
        for i, c in enumerate(cfg.disc_channels):
            layers.append(Conv2d(c_prev, c, 4, rng, stride=2, pad=1))
            if i > 0:
                layers.append(BatchNorm2d(c, rng))
            layers.append(Activation("leaky_relu"))
            c_prev = c
            size //= 2
        self.img_convs = Sequential(*layers)
        self.img_flat = c_prev * size * size
        self.view_fc = Linear(VIEW_DIM, cfg.fc_dim, rng)
        self.opacity_tf_branch = TfConvBranch(1, cfg.tf_channels, cfg.fc_dim,
                                              rng, activation="leaky_relu")
        self.color_tf_branch = TfConvBranch(3, cfg.tf_channels, cfg.fc_dim,
                                            rng, activation="leaky_relu")
        self.final = Linear(self.img_flat + 3 * cfg.fc_dim, 1, rng)

    def forward(self, v: Tensor, t_o: Tensor, t_c: Tensor,
                img: Tensor) -> Tensor:
        hi = self.img_convs(img)
        hi = hi.reshape(hi.shape[0], self.img_flat)
        hv = self.view_fc(v).leaky_relu()
        ho = self.opacity_tf_branch(
            t_o.reshape(t_o.shape[0], 1, N_TF)).leaky_relu()
        hc = self.color_tf_branch(t_c).leaky_relu()
        return self.final(concat([hi, hv, ho, hc], axis=1)).sigmoid()


def build_translation_gan(cfg: TranslationGanConfig,
                          opacity_gen: OpacityGenerator, seed: int = 0):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0B]))
    g = TranslationGenerator(cfg, opacity_gen.encoder,
                             opacity_gen.cfg.latent_dim, rng)
    d = TranslationDiscriminator(cfg, rng)
    return g, d


# -- bundle ---------------------------------------------------------------


@dataclass
class ModelBundle:
    opacity_cfg: OpacityGanConfig
    g_o: OpacityGenerator
    d_o: OpacityDiscriminator
    translation_cfg: TranslationGanConfig | None = None
    g_t: TranslationGenerator | None = None
    d_t: TranslationDiscriminator | None = None
    opacity_trained: bool = False
    translation_trained: bool = False
    training_log: dict = field(default_factory=dict)

    @staticmethod
    def build(opacity_cfg: OpacityGanConfig,
              translation_cfg: TranslationGanConfig | None = None,
              seed: int = 0) -> "ModelBundle":
        g_o, d_o = build_opacity_gan(opacity_cfg, seed)
        bundle = ModelBundle(opacity_cfg, g_o, d_o)
        if translation_cfg is not None:
            bundle.attach_translation(translation_cfg, seed)
        return bundle

    def attach_translation(self, cfg: TranslationGanConfig, seed: int = 0):
        self.translation_cfg = cfg
        self.g_t, self.d_t = build_translation_gan(cfg, self.g_o, seed)

    def named_parameters(self):
        yield from self.g_o.named_parameters("g_o.")
        yield from self.d_o.named_parameters("d_o.")
        if self.g_t is not None:
            yield from self.g_t.named_parameters("g_t.")
            yield from self.d_t.named_parameters("d_t.")

    def named_buffers(self):
        yield from self.g_o.named_buffers("g_o.")
        yield from self.d_o.named_buffers("d_o.")
        if self.g_t is not None:
            yield from self.g_t.named_buffers("g_t.")
            yield from self.d_t.named_buffers("d_t.")

    def set_eval(self):
        for m in (self.g_o, self.d_o, self.g_t, self.d_t):
            if m is not None:
                m.set_training(False)
        return self

    # -- inference --------------------------------------------------------

    def encode_tf(self, t_o: np.ndarray) -> np.ndarray:
        self._require(self.opacity_trained, "opacity GAN not trained")
        t = np.asarray(t_o, dtype=np.float32)
        single = t.ndim == 1
        if single:
            t = t[None]
        if t.shape[1] != N_TF:
            raise ValueError(f"opacity TF must have length {N_TF}")
        self.g_o.set_training(False)
        z = self.g_o.encode(Tensor(t)).data
        return z[0] if single else z

    def decode_tf(self, z: np.ndarray) -> np.ndarray:
        self._require(self.opacity_trained, "opacity GAN not trained")
        zz = np.asarray(z, dtype=np.float32)
        single = zz.ndim == 1
        if single:
            zz = zz[None]
        if zz.shape[1] != self.opacity_cfg.latent_dim:
            raise ValueError("latent code has wrong dimension")
        self.g_o.set_training(False)
        t = self.g_o.decoder(Tensor(zz)).data
        return t[0] if single else t

    def synthesize_opacity(self, view_encoded: np.ndarray,
                           t_o: np.ndarray) -> np.ndarray:
        """Opacity image(s) in [0, 1]; accepts single inputs or batches."""
        self._require(self.opacity_trained, "opacity GAN not trained")
        v, t, single = _batchify(view_encoded, t_o)
        self.g_o.set_training(False)
        img, _, _ = self.g_o(Tensor(v), Tensor(t))
        out = (img.data[:, 0] + 1.0) / 2.0
        return out[0] if single else out

    def synthesize(self, view_encoded: np.ndarray, t_o: np.ndarray,
                   t_c: np.ndarray) -> np.ndarray:
        """Color image(s) (h, w, 3) in [0, 1] via the two-stage composition."""
        self._require(self.translation_trained, "translation GAN not trained")
        v, t, single = _batchify(view_encoded, t_o)
        tc = np.asarray(t_c, dtype=np.float32)
        if single:
            tc = tc[None]
        self.set_eval()
        op_img, _, _ = self.g_o(Tensor(v), Tensor(t))
        color = self.g_t(op_img, Tensor(v), Tensor(t),
                         Tensor(normalize_color_tf(tc)))
        out = np.transpose((color.data + 1.0) / 2.0, (0, 2, 3, 1))
        out = np.clip(out, 0.0, 1.0)
        return out[0] if single else out

    @staticmethod
    def _require(flag: bool, msg: str):
        if not flag:
            raise UntrainedModelError(msg)


def _batchify(view_encoded, t_o):
    v = np.asarray(view_encoded, dtype=np.float32)
    t = np.asarray(t_o, dtype=np.float32)
    single = v.ndim == 1
    if single:
        v, t = v[None], t[None]
    return v, t, single


def normalize_color_tf(t_c_lab: np.ndarray) -> np.ndarray:
    """Scale Lab channels to roughly [-1, 1] for network input.

    Accepts (3, 256) or (B, 3, 256)."""
    t = np.array(t_c_lab, dtype=np.float32)
    t[..., 0, :] = t[..., 0, :] / 50.0 - 1.0
    t[..., 1, :] /= 110.0
    t[..., 2, :] /= 110.0
    return t


# -- training data --------------------------------------------------------


class TrainingData:
    """Dataset records loaded into memory: encoded views, TFs, images."""

    def __init__(self, dataset_dir: str):
        self.dir = dataset_dir
        self.manifest = DatasetManifest.load(dataset_dir)
        records = load_records(dataset_dir)
        self.views = np.array([r["view_encoded"] for r in records],
                              dtype=np.float32)
        self.t_o = np.array([r["t_o"] for r in records], dtype=np.float32)
        self.t_c_lab = np.array([r["t_c"] for r in records], dtype=np.float32)
        self.t_c = normalize_color_tf(self.t_c_lab)
        self._color_paths = [os.path.join(dataset_dir, r["color_image"])
                             for r in records]
        self._op_paths = [os.path.join(dataset_dir, r["opacity_image"])
                          for r in records]
        self._color_cache = None
        self._opacity_cache = None

    @property
    def train_ids(self) -> list[int]:
        return self.manifest.train_ids

    @property
    def holdout_ids(self) -> list[int]:
        return self.manifest.holdout_ids

    def opacity_images(self) -> np.ndarray:
        """(N, 1, s, s) in [-1, 1]."""
        if self._opacity_cache is None:
            imgs = np.stack([load_png(p) for p in self._op_paths])
            self._opacity_cache = (imgs[:, None] * 2.0 - 1.0).astype(np.float32)
        return self._opacity_cache

    def color_images(self) -> np.ndarray:
        """(N, 3, s, s) in [-1, 1]."""
        if self._color_cache is None:
            imgs = np.stack([load_png(p) for p in self._color_paths])
            self._color_cache = (np.transpose(imgs, (0, 3, 1, 2)) * 2.0
                                 - 1.0).astype(np.float32)
        return self._color_cache


# -- training loops -------------------------------------------------------


def _lr_at(lr0: float, epoch: int, halve_every: int) -> float:
    return lr0 * 0.5 ** (epoch // halve_every)


def _check_finite(value: float, context: dict):
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss: {context}", context)


def train_opacity_gan(data: TrainingData, cfg: OpacityGanConfig, seed: int,
                      bundle: ModelBundle | None = None,
                      checkpoint_dir: str | None = None,
                      progress=None) -> tuple[ModelBundle, list[dict]]:
    """Alternating D/G steps with the non-saturating G objective plus the
    TF autoencoder reconstruction term; lr halved on schedule."""
    from .checkpoint import save_checkpoint

    if bundle is None:
        bundle = ModelBundle.build(cfg, seed=seed)
    g, d = bundle.g_o, bundle.d_o
    g.set_training(True)
    d.set_training(True)
    d_lr0 = cfg.lr if cfg.d_lr is None else cfg.d_lr
    opt_g = Adam(g.parameters(), lr=cfg.lr)
    opt_d = Adam(d.parameters(), lr=d_lr0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10]))

    ids = np.array(data.train_ids)
    ops = data.opacity_images()
    log: list[dict] = []
    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg.lr, epoch, cfg.lr_halve_every)
        opt_g.lr = lr
        opt_d.lr = _lr_at(d_lr0, epoch, cfg.lr_halve_every)
        order = rng.permutation(ids)
        acc_real = acc_fake = n_scored = 0
        for start in range(0, len(order) - 1, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                continue
            v = Tensor(data.views[batch])
            t_o = Tensor(data.t_o[batch])
            real = Tensor(ops[batch])

            # D step: separate real and fake passes
            fake_img, _, _ = g(v, t_o)
            fake_const = Tensor(fake_img.data.copy())
            s_real = d(v, t_o, real)
            s_fake = d(v, t_o, fake_const)
            loss_d = bce_loss(s_real, 1.0) + bce_loss(s_fake, 0.0)
            opt_d.zero_grad()
            for p in g.parameters():
                p.grad = None
            loss_d.backward()
            opt_d.step()

            acc_real += int((s_real.data > 0.5).sum())
            acc_fake += int((s_fake.data < 0.5).sum())
            n_scored += len(batch)

            # G step: non-saturating adversarial + autoencoder term
            fake_img2, _, recon = g(v, t_o)
            s_fake2 = d(v, t_o, fake_img2)
            adv = bce_loss(s_fake2, 1.0)
            diff = recon - t_o
            ae = (diff * diff).sum(axis=1).mean()
            loss_g = adv + ae
            opt_g.zero_grad()
            for p in d.parameters():
                p.grad = None
            loss_g.backward()
            opt_g.step()

            entry = {"epoch": epoch, "step": len(log), "lr": lr,
                     "d_loss": float(loss_d.data),
                     "g_adv": float(adv.data), "g_ae": float(ae.data),
                     "g_total": float(loss_g.data)}
            _check_finite(entry["d_loss"] + entry["g_total"], entry)
            log.append(entry)
        d_acc = (acc_real + acc_fake) / max(1, 2 * n_scored)
        log.append({"epoch": epoch, "epoch_end": True, "lr": lr,
                    "d_accuracy": d_acc})
        if checkpoint_dir:
            bundle.opacity_trained = True
            bundle.rng_state = rng.bit_generator.state
            save_checkpoint(bundle, os.path.join(
                checkpoint_dir, f"opacity_epoch{epoch:03d}.vgan"),
                optimizers={"opacity_g": opt_g, "opacity_d": opt_d})
        if progress is not None:
            progress(epoch, cfg.epochs, d_acc)

    bundle.opacity_trained = True
    bundle.training_log["opacity"] = log
    return bundle, log


def train_translation_gan(data: TrainingData, bundle: ModelBundle,
                          cfg: TranslationGanConfig, seed: int,
                          checkpoint_dir: str | None = None,
                          progress=None) -> tuple[ModelBundle, list[dict]]:
    """Second stage: the first stage's synthesized opacity image conditions
    the generator, matching what inference composes; the opacity GAN
    (including its TF encoder) stays frozen."""
    from .checkpoint import save_checkpoint

    if not bundle.opacity_trained:
        raise UntrainedModelError("train the opacity GAN first")
    if bundle.g_t is None:
        bundle.attach_translation(cfg, seed)
    g, d = bundle.g_t, bundle.d_t
    g.set_training(True)
    d.set_training(True)
    d_lr0 = cfg.lr if cfg.d_lr is None else cfg.d_lr
    opt_g = Adam(g.parameters(), lr=cfg.lr)
    opt_d = Adam(d.parameters(), lr=d_lr0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11]))

    ids = np.array(data.train_ids)
    colors = data.color_images()
    bundle.g_o.set_training(False)
    use_adv = cfg.mode in ("gan_l1", "gan_only")
    use_l1 = cfg.mode in ("gan_l1", "l1_only")
    lam = cfg.lambda_l1 if cfg.mode == "gan_l1" else (
        1.0 if cfg.mode == "l1_only" else 0.0)

    log: list[dict] = []
    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg.lr, epoch, cfg.lr_halve_every)
        opt_g.lr = lr
        opt_d.lr = _lr_at(d_lr0, epoch, cfg.lr_halve_every)
        order = rng.permutation(ids)
        acc_real = acc_fake = n_scored = 0
        for start in range(0, len(order) - 1, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                continue
            v = Tensor(data.views[batch])
            t_o = Tensor(data.t_o[batch])
            t_c = Tensor(data.t_c[batch])
            op_img = Tensor(bundle.g_o(v, t_o)[0].data)
            real = Tensor(colors[batch])

            d_loss_val = 0.0
            if use_adv:
                fake = g(op_img, v, t_o, t_c)
                fake_const = Tensor(fake.data.copy())
                s_real = d(v, t_o, t_c, real)
                s_fake = d(v, t_o, t_c, fake_const)
                loss_d = bce_loss(s_real, 1.0) + bce_loss(s_fake, 0.0)
                opt_d.zero_grad()
                for p in g.parameters():
                    p.grad = None
                loss_d.backward()
                opt_d.step()
                d_loss_val = float(loss_d.data)
                acc_real += int((s_real.data > 0.5).sum())
                acc_fake += int((s_fake.data < 0.5).sum())
                n_scored += len(batch)

            fake2 = g(op_img, v, t_o, t_c)
            adv_val = 0.0
            if use_adv:
                adv = bce_loss(d(v, t_o, t_c, fake2), 1.0)
                adv_val = float(adv.data)
            l1 = l1_loss(fake2, real) if use_l1 else None
            if use_adv and use_l1:
                loss_g = adv + lam * l1
            elif use_adv:
                loss_g = adv
            else:
                loss_g = l1
            opt_g.zero_grad()
            if use_adv:
                for p in d.parameters():
                    p.grad = None
            for p in bundle.g_o.parameters():
                p.grad = None
            loss_g.backward()
            opt_g.step()

            entry = {"epoch": epoch, "step": len(log), "lr": lr,
                     "d_loss": d_loss_val, "g_adv": adv_val,
                     "g_l1": float(l1.data) if l1 is not None else 0.0,
                     "lambda": lam, "g_total": float(loss_g.data)}
            _check_finite(entry["d_loss"] + entry["g_total"], entry)
            log.append(entry)
        d_acc = (acc_real + acc_fake) / max(1, 2 * n_scored) if use_adv else None
        log.append({"epoch": epoch, "epoch_end": True, "lr": lr,
                    "d_accuracy": d_acc})
        if checkpoint_dir:
            bundle.translation_trained = True
            bundle.rng_state = rng.bit_generator.state
            save_checkpoint(bundle, os.path.join(
                checkpoint_dir, f"translation_epoch{epoch:03d}.vgan"),
                optimizers={"translation_g": opt_g, "translation_d": opt_d})
        if progress is not None:
            progress(epoch, cfg.epochs, d_acc)

    bundle.translation_trained = True
    bundle.training_log["translation"] = log
    return bundle, log
