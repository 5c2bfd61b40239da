"""Binary checkpoint format.

Layout: magic "VGAN", format version (u32), a JSON blob (configs, trained
flags, training log, rng state), then named array records for parameters,
batch-norm running stats, and optimizer state. All integers and floats are
little-endian. save -> load -> save is byte-exact.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict

import numpy as np

from .nets import (ModelBundle, OpacityGanConfig, TranslationGanConfig)

MAGIC = b"VGAN"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _write_blob(f, data: bytes):
    f.write(struct.pack("<Q", len(data)))
    f.write(data)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_blob(f) -> bytes:
    (n,) = struct.unpack("<Q", _read_exact(f, 8))
    return _read_exact(f, n)


def _write_array(f, name: str, arr: np.ndarray):
    nb = name.encode()
    f.write(struct.pack("<H", len(nb)))
    f.write(nb)
    dt = arr.dtype.str.encode()  # e.g. b"<f4"
    f.write(struct.pack("<B", len(dt)))
    f.write(dt)
    f.write(struct.pack("<B", arr.ndim))
    for s in arr.shape:
        f.write(struct.pack("<I", s))
    _write_blob(f, np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def _read_array(f) -> tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<H", _read_exact(f, 2))
    name = _read_exact(f, nlen).decode()
    (dlen,) = struct.unpack("<B", _read_exact(f, 1))
    dtype = np.dtype(_read_exact(f, dlen).decode())
    (ndim,) = struct.unpack("<B", _read_exact(f, 1))
    shape = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim))
    raw = _read_blob(f)
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return name, arr


def _config_json(bundle: ModelBundle) -> bytes:
    doc = {
        "opacity_cfg": asdict(bundle.opacity_cfg),
        "translation_cfg": (asdict(bundle.translation_cfg)
                            if bundle.translation_cfg else None),
        "opacity_trained": bundle.opacity_trained,
        "translation_trained": bundle.translation_trained,
        "training_log": bundle.training_log,
        "rng_state": getattr(bundle, "rng_state", None),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def _optimizer_arrays(optimizers: dict | None):
    if not optimizers:
        return []
    out = []
    for key in sorted(optimizers):
        opt = optimizers[key]
        state = opt.state_dict()
        out.append((f"opt/{key}/meta",
                    np.array([state["t"], state["lr"]], dtype=np.float64)))
        for i, m in enumerate(state["m"]):
            out.append((f"opt/{key}/m/{i}", m))
        for i, v in enumerate(state["v"]):
            out.append((f"opt/{key}/v/{i}", v))
    return out


def save_checkpoint(bundle: ModelBundle, path: str,
                    optimizers: dict | None = None,
                    raw_opt_records: dict | None = None) -> None:
    """`optimizers` maps key -> Adam; `raw_opt_records` re-emits the opt
    arrays returned by load_checkpoint (byte-exact round trip)."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_blob(buf, _config_json(bundle))

    params = list(bundle.named_parameters())
    buffers = list(bundle.named_buffers())
    opt_arrays = _optimizer_arrays(optimizers)
    if raw_opt_records:
        # dict preserves file order from load_checkpoint
        opt_arrays += list(raw_opt_records.items())
    records = ([("param/" + n, p.data) for n, p in params]
               + [("buffer/" + n, b) for n, b in buffers]
               + opt_arrays)
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records:
        _write_array(buf, name, arr)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path: str) -> tuple[ModelBundle, dict]:
    """Returns (bundle, optimizer state arrays keyed by name)."""
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError("bad magic; not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        doc = json.loads(_read_blob(f).decode())
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        records = dict(_read_array(f) for _ in range(count))

    op_cfg = OpacityGanConfig(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in doc["opacity_cfg"].items()})
    bundle = ModelBundle.build(op_cfg, seed=0)
    if doc["translation_cfg"] is not None:
        tr_cfg = TranslationGanConfig(
            **{k: tuple(v) if isinstance(v, list) else v
               for k, v in doc["translation_cfg"].items()})
        bundle.attach_translation(tr_cfg, seed=0)
    bundle.opacity_trained = doc["opacity_trained"]
    bundle.translation_trained = doc["translation_trained"]
    bundle.training_log = doc["training_log"]
    if doc.get("rng_state") is not None:
        bundle.rng_state = doc["rng_state"]

    loaded = set()
    for name, p in bundle.named_parameters():
        key = "param/" + name
        if key not in records:
            raise CheckpointError(f"missing parameter record {name}")
        if records[key].shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        p.data = records[key].astype(p.data.dtype)
        loaded.add(key)
    for name, b in bundle.named_buffers():
        key = "buffer/" + name
        if key not in records:
            raise CheckpointError(f"missing buffer record {name}")
        b[...] = records[key]
        loaded.add(key)
    opt_state = {k: v for k, v in records.items() if k.startswith("opt/")}
    return bundle, opt_state
