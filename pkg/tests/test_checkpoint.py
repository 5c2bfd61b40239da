import numpy as np
import pytest

from conftest import random_tf_inputs, tiny_bundle
from volgen.checkpoint import (CheckpointError, load_checkpoint,
                               save_checkpoint)
from volgen.tensor import Adam


class TestRoundTrip:
    def test_inference_identical(self, tmp_path, rng):
        bundle = tiny_bundle(seed=9)
        path = str(tmp_path / "m.vgan")
        save_checkpoint(bundle, path)
        loaded, opt = load_checkpoint(path)
        assert opt == {}
        view, t_o, t_c = random_tf_inputs(rng)
        assert np.array_equal(bundle.synthesize(view, t_o, t_c),
                              loaded.synthesize(view, t_o, t_c))
        assert np.array_equal(bundle.encode_tf(t_o), loaded.encode_tf(t_o))

    def test_flags_and_log_survive(self, tmp_path):
        bundle = tiny_bundle()
        bundle.translation_trained = False
        bundle.training_log = {"opacity": [{"epoch": 0, "d_loss": 1.5}]}
        path = str(tmp_path / "m.vgan")
        save_checkpoint(bundle, path)
        loaded, _ = load_checkpoint(path)
        assert loaded.opacity_trained and not loaded.translation_trained
        assert loaded.training_log == bundle.training_log

    def test_save_load_save_byte_exact(self, tmp_path):
        bundle = tiny_bundle(seed=2)
        p1, p2 = str(tmp_path / "a.vgan"), str(tmp_path / "b.vgan")
        opt = Adam(bundle.g_o.parameters(), lr=1e-3)
        for p in bundle.g_o.parameters():
            p.grad = np.ones_like(p.data)
        opt.step()
        save_checkpoint(bundle, p1, optimizers={"g": opt})
        loaded, opt_records = load_checkpoint(p1)
        save_checkpoint(loaded, p2, raw_opt_records=opt_records)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_optimizer_state_recorded(self, tmp_path):
        bundle = tiny_bundle()
        opt = Adam(bundle.g_o.parameters(), lr=5e-4)
        for p in bundle.g_o.parameters():
            p.grad = np.ones_like(p.data)
        opt.step()
        path = str(tmp_path / "m.vgan")
        save_checkpoint(bundle, path, optimizers={"g": opt})
        _, records = load_checkpoint(path)
        meta = records["opt/g/meta"]
        assert meta[0] == 1 and meta[1] == pytest.approx(5e-4)
        n = len(bundle.g_o.parameters())
        assert sum(k.startswith("opt/g/m/") for k in records) == n
        assert sum(k.startswith("opt/g/v/") for k in records) == n


class TestErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.vgan"
        p.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(p))

    def test_bad_version(self, tmp_path):
        p = tmp_path / "x.vgan"
        p.write_bytes(b"VGAN" + (99).to_bytes(4, "little") + bytes(64))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(p))

    def test_truncated(self, tmp_path):
        bundle = tiny_bundle()
        path = tmp_path / "m.vgan"
        save_checkpoint(bundle, str(path))
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_missing_parameter_record(self, tmp_path):
        import volgen.checkpoint as cp
        bundle = tiny_bundle()
        path = str(tmp_path / "m.vgan")
        orig = cp._config_json(bundle)

        # drop the last parameter record by saving with a truncated list
        params = list(bundle.named_parameters())
        name, _ = params[-1]
        import io
        import struct
        buf = io.BytesIO()
        buf.write(cp.MAGIC)
        buf.write(struct.pack("<I", cp.VERSION))
        cp._write_blob(buf, orig)
        records = ([("param/" + n, p.data) for n, p in params[:-1]]
                   + [("buffer/" + n, b) for n, b in bundle.named_buffers()])
        buf.write(struct.pack("<I", len(records)))
        for n, arr in records:
            cp._write_array(buf, n, arr)
        with open(path, "wb") as f:
            f.write(buf.getvalue())
        with pytest.raises(CheckpointError, match="missing parameter"):
            load_checkpoint(path)
