"""Reverse-mode autodiff on numpy arrays, tensor-granularity.

Each Tensor wraps an ndarray plus a recorded backward closure; backward()
topologically sorts the graph from a scalar loss and accumulates gradients
into every reachable leaf with requires_grad set. Dtype follows the inputs:
float32 graphs for training, float64 graphs for gradient verification.

Only the operations the networks need are implemented; no general
broadcasting beyond what bias adds and scalar constants require.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, _parents=(),
                 _backward=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- arithmetic -------------------------------------------------------

    def _lift(self, x) -> "Tensor":
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x, dtype=self.data.dtype))

    def _binary(self, other, out_data, dself, dother):
        def bw(g):
            self._accum(_unbroadcast(dself(g), self.data.shape))
            if other._backward is not None or other.requires_grad:
                other._accum(_unbroadcast(dother(g), other.data.shape))
        return Tensor(out_data, _parents=(self, other), _backward=bw)

    def __add__(self, other):
        o = self._lift(other)
        return self._binary(o, self.data + o.data, lambda g: g, lambda g: g)

    __radd__ = __add__

    def __neg__(self):
        def bw(g):
            self._accum(-g)
        return Tensor(-self.data, _parents=(self,), _backward=bw)

    def __sub__(self, other):
        o = self._lift(other)
        return self._binary(o, self.data - o.data, lambda g: g, lambda g: -g)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        return self._binary(o, self.data * o.data,
                            lambda g: g * o.data, lambda g: g * self.data)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return self._binary(o, self.data / o.data,
                            lambda g: g / o.data,
                            lambda g: -g * self.data / (o.data * o.data))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, p: float):
        d = self.data

        def bw(g):
            self._accum(g * p * d ** (p - 1))
        return Tensor(d ** p, _parents=(self,), _backward=bw)

    def matmul(self, other: "Tensor") -> "Tensor":
        o = self._lift(other)
        out = self.data @ o.data

        def bw(g):
            self._accum(g @ o.data.T)
            o._accum(self.data.T @ g)
        return Tensor(out, _parents=(self, o), _backward=bw)

    __matmul__ = matmul

    # -- shape ------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        old = self.data.shape

        def bw(g):
            self._accum(g.reshape(old))
        return Tensor(self.data.reshape(*shape), _parents=(self,), _backward=bw)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        def bw(g):
            if axis is None:
                self._accum(np.full_like(self.data, 1.0) * g)
            else:
                gx = g if keepdims else np.expand_dims(g, axis)
                self._accum(np.broadcast_to(gx, self.data.shape).copy())
        return Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                      _parents=(self,), _backward=bw)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise ------------------------------------------------------

    def exp(self) -> "Tensor":
        out = np.exp(self.data)

        def bw(g):
            self._accum(g * out)
        return Tensor(out, _parents=(self,), _backward=bw)

    def log(self) -> "Tensor":
        def bw(g):
            self._accum(g / self.data)
        return Tensor(np.log(self.data), _parents=(self,), _backward=bw)

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)

        def bw(g):
            self._accum(g * 0.5 / np.maximum(out, 1e-30))
        return Tensor(out, _parents=(self,), _backward=bw)

    def abs(self) -> "Tensor":
        d = self.data

        def bw(g):
            self._accum(g * np.sign(d))
        return Tensor(np.abs(d), _parents=(self,), _backward=bw)

    def clamp(self, lo: float, hi: float) -> "Tensor":
        d = self.data
        mask = (d >= lo) & (d <= hi)

        def bw(g):
            self._accum(g * mask)
        return Tensor(np.clip(d, lo, hi), _parents=(self,), _backward=bw)

    def relu(self) -> "Tensor":
        mask = self.data > 0

        def bw(g):
            self._accum(g * mask)
        return Tensor(self.data * mask, _parents=(self,), _backward=bw)

    def leaky_relu(self, alpha: float = 0.2) -> "Tensor":
        d = self.data
        slope = np.where(d > 0, 1.0, alpha)

        def bw(g):
            self._accum(g * slope)
        return Tensor(d * slope, _parents=(self,), _backward=bw)

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)

        def bw(g):
            self._accum(g * (1.0 - out * out))
        return Tensor(out, _parents=(self,), _backward=bw)

    def sigmoid(self) -> "Tensor":
        out = 1.0 / (1.0 + np.exp(-self.data))

        def bw(g):
            self._accum(g * out * (1.0 - out))
        return Tensor(out, _parents=(self,), _backward=bw)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(a, b)
            t._accum(g[tuple(sl)])
    return Tensor(out, _parents=tuple(tensors), _backward=bw)


def stack0(tensors: list[Tensor]) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=0)

    def bw(g):
        for i, t in enumerate(tensors):
            t._accum(g[i])
    return Tensor(out, _parents=tuple(tensors), _backward=bw)


def _pad2d(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv1d(x: Tensor, W: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """x: (B, c_i, n); W: (w, c_o, c_i). Zero padding both sides."""
    kw, c_o, c_i = W.shape
    xd = x.data if pad == 0 else np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    n_p = xd.shape[2]
    if n_p < kw:
        raise ValueError("input shorter than kernel after padding")
    cols = np.lib.stride_tricks.sliding_window_view(xd, kw, axis=2)[:, :, ::stride]
    # cols: (B, c_i, n_o, kw)
    out = np.einsum("binw,woi->bon", cols, W.data, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None]
    n_o = out.shape[2]

    def bw(g):
        W._accum(np.einsum("binw,bon->woi", cols, g, optimize=True))
        if bias is not None:
            bias._accum(g.sum(axis=(0, 2)))
        gx = np.zeros_like(xd)
        for l in range(kw):
            gx[:, :, l:l + (n_o - 1) * stride + 1:stride] += np.einsum(
                "bon,oi->bin", g, W.data[l], optimize=True)
        x._accum(gx[:, :, pad:gx.shape[2] - pad] if pad else gx)
    return Tensor(out, _parents=(x, W) + ((bias,) if bias is not None else ()),
                  _backward=bw)


def conv2d(x: Tensor, W: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """x: (B, c_i, H, W); W: (kh, kw, c_o, c_i). Zero padding both sides."""
    kh, kw, c_o, c_i = W.shape
    xd = _pad2d(x.data, pad, pad)
    cols = np.lib.stride_tricks.sliding_window_view(xd, (kh, kw), axis=(2, 3))
    cols = cols[:, :, ::stride, ::stride]  # (B, c_i, Ho, Wo, kh, kw)
    out = np.einsum("bihwyx,yxoi->bohw", cols, W.data, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    Ho, Wo = out.shape[2], out.shape[3]

    def bw(g):
        W._accum(np.einsum("bihwyx,bohw->yxoi", cols, g, optimize=True))
        if bias is not None:
            bias._accum(g.sum(axis=(0, 2, 3)))
        gx = np.zeros_like(xd)
        for dy in range(kh):
            for dx in range(kw):
                contrib = np.einsum("bohw,oi->bihw", g, W.data[dy, dx], optimize=True)
                gx[:, :, dy:dy + (Ho - 1) * stride + 1:stride,
                   dx:dx + (Wo - 1) * stride + 1:stride] += contrib
        if pad:
            gx = gx[:, :, pad:gx.shape[2] - pad, pad:gx.shape[3] - pad]
        x._accum(gx)
    return Tensor(out, _parents=(x, W) + ((bias,) if bias is not None else ()),
                  _backward=bw)


def upsample_nearest2(x: Tensor) -> Tensor:
    """Replicate each pixel 2x2. x: (B, C, H, W) -> (B, C, 2H, 2W)."""
    if x.data.ndim != 4:
        raise ValueError("upsample expects a 4-axis tensor")
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def bw(g):
        b, c, h2, w2 = g.shape
        x._accum(g.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)))
    return Tensor(out, _parents=(x,), _backward=bw)


def tile_spatial(x: Tensor, h: int, w: int) -> Tensor:
    """Broadcast a (B, C) feature vector over an h x w grid -> (B, C, h, w)."""
    out = np.broadcast_to(x.data[:, :, None, None],
                          x.shape + (h, w)).copy()

    def bw(g):
        x._accum(g.sum(axis=(2, 3)))
    return Tensor(out, _parents=(x,), _backward=bw)


def mul_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant mask (no gradient through the mask)."""
    def bw(g):
        x._accum(g * mask)
    return Tensor(x.data * mask, _parents=(x,), _backward=bw)


# -- losses ---------------------------------------------------------------

_BCE_EPS = 1e-7


def bce_loss(pred: Tensor, target: float | np.ndarray) -> Tensor:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7]."""
    p = pred.clamp(_BCE_EPS, 1.0 - _BCE_EPS)
    t = np.broadcast_to(np.asarray(target, dtype=pred.dtype), pred.shape)
    loss = -(Tensor(t) * p.log() + Tensor(1.0 - t) * (1.0 - p).log())
    return loss.mean()


def l1_loss(pred: Tensor, target: Tensor | np.ndarray) -> Tensor:
    t = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {t.shape}")
    return (pred - t).abs().mean()


def l2norm_region(img: Tensor, mask: np.ndarray) -> Tensor:
    """sqrt(sum over masked pixels, all channels, of squared values).

    img: (B, C, H, W) or (C, H, W); mask broadcastable (H, W) of {0,1}.
    Batched input returns per-sample norms summed (keeps per-sample gradients
    separated for field batching)."""
    masked = mul_mask(img, mask)
    sq = masked * masked
    if img.data.ndim == 4:
        per = sq.sum(axis=(1, 2, 3))
        return per.sqrt().sum()
    return sq.sum().sqrt()
