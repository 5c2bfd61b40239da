"""Layers over the autodiff engine: FC, 1D/2D conv, batch norm, upsampling.

Weight init is DCGAN-style: N(0, 0.02) for conv/FC weights, batch-norm gamma
jittered around 1, biases zero. Constructors take an rng so building a model
from a seed is deterministic.
"""

from __future__ import annotations

import numpy as np

from .engine import Tensor, conv1d, conv2d, upsample_nearest2

INIT_STD = 0.02
BN_EPS = 1e-5


class Module:
    def __init__(self):
        self.training = True

    def modules(self):
        # underscore attributes are deliberately hidden (shared/frozen refs)
        for name, v in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(v, Module):
                yield name, v
            elif isinstance(v, (list, tuple)):
                for i, m in enumerate(v):
                    if isinstance(m, Module):
                        yield f"{name}.{i}", m

    def named_parameters(self, prefix: str = ""):
        for name, v in vars(self).items():
            if not name.startswith("_") and isinstance(v, Tensor) and v.requires_grad:
                yield prefix + name, v
        for name, m in self.modules():
            yield from m.named_parameters(prefix + name + ".")

    def named_buffers(self, prefix: str = ""):
        for name, v in vars(self).items():
            if not name.startswith("_") and isinstance(v, np.ndarray):
                yield prefix + name, v
        for name, m in self.modules():
            yield from m.named_buffers(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def set_training(self, flag: bool):
        self.training = flag
        for _, m in self.modules():
            m.set_training(flag)
        return self

    def load_buffer(self, name: str, value: np.ndarray):
        obj = self
        parts = name.split(".")
        for p in parts[:-1]:
            obj = getattr(obj, p) if not p.isdigit() else obj[int(p)]
        buf = getattr(obj, parts[-1])
        buf[...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(rng: np.random.Generator, shape, std=INIT_STD) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(np.float32),
                  requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = _param(rng, (n_in, n_out))
        self.bias = _zeros((n_out,))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(
                f"fc expects input dim {self.weight.shape[0]}, got {x.shape}")
        return x @ self.weight + self.bias


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, width: int,
                 rng: np.random.Generator, stride: int = 1, pad: int = 0):
        super().__init__()
        self.weight = _param(rng, (width, c_out, c_in))
        self.bias = _zeros((c_out,))
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, self.stride, self.pad)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, width: int,
                 rng: np.random.Generator, stride: int = 1, pad: int = 0,
                 height: int | None = None):
        super().__init__()
        kh = height if height is not None else width
        self.weight = _param(rng, (kh, width, c_out, c_in))
        self.bias = _zeros((c_out,))
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.pad)


class BatchNorm2d(Module):
    def __init__(self, channels: int, rng: np.random.Generator,
                 momentum: float = 0.1):
        super().__init__()
        self.gamma = Tensor(
            (1.0 + rng.normal(0.0, INIT_STD, size=channels)).astype(np.float32),
            requires_grad=True)
        self.beta = _zeros((channels,))
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum

    def forward(self, x: Tensor) -> Tensor:
        g = self.gamma.reshape(1, -1, 1, 1)
        b = self.beta.reshape(1, -1, 1, 1)
        if self.training:
            if x.shape[0] < 2:
                raise ValueError("batch norm needs batch >= 2 in train mode")
            mu = x.mean(axis=(0, 2, 3), keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=(0, 2, 3), keepdims=True)
            y = xc / (var + BN_EPS).sqrt()
            m = self.momentum
            self.running_mean[...] = ((1 - m) * self.running_mean
                                      + m * mu.data.reshape(-1))
            self.running_var[...] = ((1 - m) * self.running_var
                                     + m * var.data.reshape(-1))
        else:
            mu = self.running_mean.reshape(1, -1, 1, 1)
            sd = np.sqrt(self.running_var.reshape(1, -1, 1, 1) + BN_EPS)
            y = (x - Tensor(mu.astype(x.dtype))) * Tensor(1.0 / sd.astype(x.dtype))
        return y * g + b


class Upsample2(Module):
    def forward(self, x: Tensor) -> Tensor:
        return upsample_nearest2(x)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x) if isinstance(layer, Module) else layer(x)
        return x


class Activation(Module):
    def __init__(self, kind: str, alpha: float = 0.2):
        super().__init__()
        self.kind = kind
        self.alpha = alpha

    def forward(self, x: Tensor) -> Tensor:
        if self.kind == "relu":
            return x.relu()
        if self.kind == "leaky_relu":
            return x.leaky_relu(self.alpha)
        if self.kind == "tanh":
            return x.tanh()
        if self.kind == "sigmoid":
            return x.sigmoid()
        raise ValueError(f"unknown activation {self.kind!r}")
