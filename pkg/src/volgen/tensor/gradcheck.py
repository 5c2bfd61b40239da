"""Central-finite-difference gradient checks for every tensor operation.

Each check builds a scalar objective from one op applied to random 64-bit
inputs, runs one backward pass, and compares every input gradient against
(f(x + d e_k) - f(x - d e_k)) / (2 d). Non-smooth ops (abs, relu, clamp,
leaky_relu) are sampled away from their kinks so the finite difference is
well defined.
"""

from __future__ import annotations

import time

import numpy as np

from . import engine
from .engine import (Tensor, bce_loss, concat, conv1d, conv2d, l1_loss,
                     l2norm_region, mul_mask, stack0, tile_spatial,
                     upsample_nearest2)

DELTA = 1e-6
TOL = 1e-4


def _fd_check(build, inputs: list[np.ndarray], delta: float = DELTA) -> float:
    """Max relative FD error over all entries of all inputs.

    `build(tensors)` returns a scalar Tensor; `inputs` are float64 arrays."""
    tensors = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    out = build(tensors)
    out.backward()
    worst = 0.0
    for x, t in zip(inputs, tensors):
        flat = x.reshape(-1)
        grad = t.grad.reshape(-1)
        scale = max(np.abs(grad).max(), 1.0)
        i = next(j for j, u in enumerate(inputs) if u is x)
        for k in range(flat.size):
            hi = [u.copy() for u in inputs]
            lo = [u.copy() for u in inputs]
            hi[i].reshape(-1)[k] += delta
            lo[i].reshape(-1)[k] -= delta
            f_hi = float(build([Tensor(u) for u in hi]).data)
            f_lo = float(build([Tensor(u) for u in lo]).data)
            fd = (f_hi - f_lo) / (2 * delta)
            worst = max(worst, abs(fd - grad[k]) / scale)
    return worst


def _away_from(x: np.ndarray, kinks, margin: float = 0.05) -> np.ndarray:
    for k in kinks:
        close = np.abs(x - k) < margin
        x = np.where(close, x + np.sign(x - k + 1e-12) * margin, x)
    return x


def _rand(rng, *shape):
    return rng.standard_normal(shape)


def op_checks(rng: np.random.Generator) -> dict:
    """One named check per op; each returns a max relative FD error."""
    def shp(lo=1, hi=5, n=2):
        return tuple(int(rng.integers(lo, hi)) for _ in range(n))

    def reduce_scalar(t):
        return (t * t).sum() if t.data.ndim else t

    checks = {}

    def simple(name, fn, gen=None, kinks=()):
        def run():
            x = _rand(rng, *shp()) if gen is None else gen()
            if kinks:
                x = _away_from(x, kinks)
            return _fd_check(lambda ts: reduce_scalar(fn(ts[0])), [x])
        checks[name] = run

    simple("add", lambda t: t + 1.7)
    simple("neg", lambda t: -t)
    simple("sub", lambda t: 2.5 - t)
    simple("mul", lambda t: t * 0.7)
    simple("div", lambda t: t / 1.3)
    simple("rdiv", lambda t: 2.0 / t,
           gen=lambda: rng.uniform(0.5, 2.0, size=shp()))
    simple("pow", lambda t: t ** 3.0,
           gen=lambda: rng.uniform(0.5, 2.0, size=shp()))
    simple("reshape", lambda t: t.reshape(-1))
    simple("sum_all", lambda t: t.sum())
    simple("sum_axis", lambda t: (t.sum(axis=0) ** 2.0).sum())
    simple("sum_keepdims", lambda t: (t.sum(axis=1, keepdims=True) * t).sum())
    simple("mean", lambda t: (t.mean(axis=0) ** 2.0).sum())
    simple("exp", lambda t: t.exp())
    simple("log", lambda t: t.log(),
           gen=lambda: rng.uniform(0.5, 3.0, size=shp()))
    simple("sqrt", lambda t: t.sqrt(),
           gen=lambda: rng.uniform(0.5, 3.0, size=shp()))
    simple("abs", lambda t: t.abs(), kinks=(0.0,))
    simple("clamp", lambda t: t.clamp(-0.5, 0.5), kinks=(-0.5, 0.5))
    simple("relu", lambda t: t.relu(), kinks=(0.0,))
    simple("leaky_relu", lambda t: t.leaky_relu(0.2), kinks=(0.0,))
    simple("tanh", lambda t: t.tanh())
    simple("sigmoid", lambda t: t.sigmoid())

    def binary(name, fn):
        def run():
            s = shp()
            return _fd_check(lambda ts: reduce_scalar(fn(ts[0], ts[1])),
                             [_rand(rng, *s), _rand(rng, *s)])
        checks[name] = run

    binary("add_t", lambda a, b: a + b)
    binary("sub_t", lambda a, b: a - b)
    binary("mul_t", lambda a, b: a * b)
    binary("div_t", lambda a, b: a / (b * b + 1.0))

    def broadcast():
        a = _rand(rng, 3, 4)
        b = _rand(rng, 4)
        return _fd_check(lambda ts: ((ts[0] + ts[1]) ** 2.0).sum(), [a, b])
    checks["broadcast_add"] = broadcast

    def matmul():
        n, k, m = (int(rng.integers(1, 5)) for _ in range(3))
        return _fd_check(lambda ts: (ts[0].matmul(ts[1]) ** 2.0).sum(),
                         [_rand(rng, n, k), _rand(rng, k, m)])
    checks["matmul"] = matmul

    def concat_check():
        a, b = _rand(rng, 2, 3), _rand(rng, 2, 2)
        return _fd_check(lambda ts: (concat(ts, axis=1) ** 2.0).sum(), [a, b])
    checks["concat"] = concat_check

    def stack_check():
        a, b = _rand(rng, 2, 3), _rand(rng, 2, 3)
        return _fd_check(lambda ts: (stack0(ts) ** 2.0).sum(), [a, b])
    checks["stack0"] = stack_check

    def conv1d_check():
        ci, co = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        n, kw = int(rng.integers(4, 8)), int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        x = _rand(rng, 2, ci, n)
        w = _rand(rng, kw, co, ci)
        b = _rand(rng, co)
        return _fd_check(
            lambda ts: (conv1d(ts[0], ts[1], ts[2], stride, pad) ** 2.0).sum(),
            [x, w, b])
    checks["conv1d"] = conv1d_check

    def conv2d_check():
        ci, co = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        hw, kw = int(rng.integers(3, 6)), int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        x = _rand(rng, 2, ci, hw, hw)
        w = _rand(rng, kw, kw, co, ci)
        b = _rand(rng, co)
        return _fd_check(
            lambda ts: (conv2d(ts[0], ts[1], ts[2], stride, pad) ** 2.0).sum(),
            [x, w, b])
    checks["conv2d"] = conv2d_check

    def upsample_check():
        x = _rand(rng, 1, 2, *shp(1, 4, 2))
        return _fd_check(lambda ts: (upsample_nearest2(ts[0]) ** 2.0).sum(), [x])
    checks["upsample_nearest2"] = upsample_check

    def tile_check():
        x = _rand(rng, 2, 3)
        return _fd_check(lambda ts: (tile_spatial(ts[0], 2, 2) ** 2.0).sum(), [x])
    checks["tile_spatial"] = tile_check

    def mask_check():
        x = _rand(rng, 1, 2, 3, 3)
        mask = (rng.random((3, 3)) > 0.4).astype(np.float64)
        return _fd_check(lambda ts: (mul_mask(ts[0], mask) ** 2.0).sum(), [x])
    checks["mul_mask"] = mask_check

    def bce_check():
        p = rng.uniform(0.05, 0.95, size=(3, 1))
        tgt = rng.integers(0, 2, size=(3, 1)).astype(np.float64)
        return _fd_check(lambda ts: bce_loss(ts[0], tgt), [p])
    checks["bce_loss"] = bce_check

    def l1_check():
        s = shp()
        a = _away_from(_rand(rng, *s), (0.0,))
        b = np.zeros(s)
        return _fd_check(lambda ts: l1_loss(ts[0], b), [a])
    checks["l1_loss"] = l1_check

    def l2norm_check():
        x = _rand(rng, 2, 3, 4, 4)
        mask = (rng.random((4, 4)) > 0.3).astype(np.float64)
        if not mask.any():
            mask[0, 0] = 1.0
        return _fd_check(lambda ts: l2norm_region(ts[0], mask), [x])
    checks["l2norm_region"] = l2norm_check

    return checks


def run_suite(trials: int = 20, seed: int = 0) -> dict:
    """Run every op check `trials` times; returns per-op max relative error,
    overall worst, wall time, and pass flag (worst < 1e-4)."""
    rng = np.random.default_rng(seed)
    t0 = time.time()
    results = {}
    for name, run in op_checks(rng).items():
        worst = 0.0
        for _ in range(trials):
            worst = max(worst, run())
        results[name] = float(worst)
    overall = max(results.values())
    return {"ops": results, "worst": overall, "trials": trials,
            "elapsed_s": time.time() - t0, "passed": bool(overall < TOL)}
