import json

import numpy as np
import pytest

from conftest import tiny_bundle
from volgen.checkpoint import save_checkpoint
from volgen.cli import main


@pytest.fixture()
def capjson(capsys):
    def read():
        out = capsys.readouterr().out
        return json.loads(out)
    return read


def write_tf(path):
    rng = np.random.default_rng(7)
    doc = {"t_o": rng.random(256).tolist(),
           "t_c": np.stack([rng.uniform(0, 100, 256),
                            rng.uniform(-60, 60, 256),
                            rng.uniform(-60, 60, 256)]).tolist()}
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def tiny_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "tiny.vgan"
    save_checkpoint(tiny_bundle(), str(path))
    return str(path)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ds")
    assert main(["gen-data", "--volume", "two-shell", "--n", "12",
                 "--seed", "3", "--out", str(out), "--color-size", "16",
                 "--opacity-size", "16", "--holdout", "2"]) == 0
    return str(out)


class TestExitCodes:
    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_option(self):
        assert main(["gen-data"]) == 1

    def test_help_is_success(self):
        assert main(["--help"]) == 0

    def test_bad_view_text_is_usage_error(self, tmp_path, tiny_ckpt):
        tf = write_tf(tmp_path / "tf.json")
        assert main(["synth", "--ckpt", tiny_ckpt, "--view", "not-a-view",
                     "--tf", tf, "--out", str(tmp_path / "o.png")]) == 1

    def test_runtime_failure_is_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.vgan"
        bad.write_bytes(b"NOPE")
        tf = write_tf(tmp_path / "tf.json")
        code = main(["synth", "--ckpt", str(bad), "--view", "0,0,0,2",
                     "--tf", tf, "--out", str(tmp_path / "o.png")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestGenData:
    def test_summary_and_files(self, tiny_dataset, capjson):
        import os
        assert os.path.exists(os.path.join(tiny_dataset, "manifest.json"))
        assert main(["gen-data", "--volume", "two-shell", "--n", "12",
                     "--seed", "3", "--out", tiny_dataset,
                     "--color-size", "16", "--opacity-size", "16",
                     "--holdout", "2"]) == 0
        doc = capjson()
        assert doc["command"] == "gen-data"
        assert doc["manifest"]["count"] == 12


class TestRenderAndSynth:
    def test_render_writes_png(self, tmp_path, capjson):
        tf = write_tf(tmp_path / "tf.json")
        out = tmp_path / "img.png"
        assert main(["render", "--volume", "two-shell", "--view",
                     "0.4,0.2,0.0,2.0", "--tf", tf, "--out", str(out),
                     "--size", "16"]) == 0
        assert out.exists()
        assert capjson()["size"] == [16, 16]

    def test_synth_writes_png(self, tmp_path, tiny_ckpt, capjson):
        tf = write_tf(tmp_path / "tf.json")
        out = tmp_path / "img.png"
        assert main(["synth", "--ckpt", tiny_ckpt, "--view", "0.4,0.2,0.0,2.0",
                     "--tf", tf, "--out", str(out)]) == 0
        assert out.exists()
        assert capjson()["size"] == [16, 16]


class TestEvalAndBaselines:
    def test_eval(self, tiny_ckpt, tiny_dataset, capjson, tmp_path):
        report = tmp_path / "report.json"
        assert main(["eval", "--ckpt", tiny_ckpt, "--data", tiny_dataset,
                     "--out", str(report)]) == 0
        doc = capjson()
        assert doc["n_samples"] == 1
        assert np.isfinite(doc["mean_rmse"]) and np.isfinite(doc["mean_emd"])
        assert report.exists()

    def test_baselines_table(self, tiny_ckpt, tiny_dataset, capjson, tmp_path):
        out = tmp_path / "table.csv"
        assert main(["baselines", "--data", tiny_dataset,
                     "--ckpt", f"gan_l1={tiny_ckpt}",
                     "--out", str(out)]) == 0
        doc = capjson()
        labels = [row["variant"] for row in doc["table"]]
        assert labels == ["nearest_neighbor", "gan_l1"]
        assert out.read_text().startswith("variant,")

    def test_baselines_bad_spec(self, tiny_dataset):
        assert main(["baselines", "--data", tiny_dataset,
                     "--ckpt", "no-equals-sign"]) == 1


class TestGradCheck:
    def test_runs_and_reports(self, capjson):
        assert main(["grad-check", "--trials", "1", "--seed", "0"]) == 0
        doc = capjson()
        assert doc["passed"] is True
        assert doc["worst"] < 1e-4
        assert doc["trials"] == 1


class TestTraining:
    def test_train_both_stages(self, tiny_dataset, tmp_path, capjson):
        op_out = tmp_path / "op.vgan"
        assert main(["train-opacity", "--data", tiny_dataset,
                     "--out", str(op_out), "--epochs", "1",
                     "--latent-dim", "4", "--batch-size", "5",
                     "--seed", "2"]) == 0
        doc = capjson()
        assert len(doc["d_accuracy_per_epoch"]) == 1
        assert op_out.exists()

        full_out = tmp_path / "full.vgan"
        assert main(["train-translation", "--data", tiny_dataset,
                     "--ckpt", str(op_out), "--out", str(full_out),
                     "--epochs", "1", "--batch-size", "5",
                     "--seed", "2"]) == 0
        doc = capjson()
        assert len(doc["d_accuracy_per_epoch"]) == 1
        assert full_out.exists()

        tf = write_tf(tmp_path / "tf.json")
        img = tmp_path / "s.png"
        assert main(["synth", "--ckpt", str(full_out), "--view", "0,0,0,2",
                     "--tf", tf, "--out", str(img)]) == 0
        assert img.exists()
