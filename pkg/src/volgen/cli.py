"""Command-line entry points.

Every subcommand prints a machine-readable JSON summary on success. Exit
codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys

import click
import numpy as np


def _emit(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=1, sort_keys=True, default=str))


def _load_volume(ref: str):
    from .volume import (VolumeMeta, load_volume, solid_cube_volume,
                         two_shell_volume)
    if ref == "two-shell":
        return two_shell_volume()
    if ref == "solid-cube":
        return solid_cube_volume()
    return load_volume(ref, VolumeMeta.from_sidecar(ref + ".json"))


def _parse_view(text: str):
    from .renderer import Viewpoint
    parts = text.split(",")
    if len(parts) != 4:
        raise click.UsageError(
            "--view expects azimuth,elevation,roll,distance")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise click.UsageError("--view parts must be numbers")
    return Viewpoint.from_raw(vals)


def _load_tf(path: str):
    from .renderer import validate_color_tf, validate_opacity_tf
    with open(path) as f:
        doc = json.load(f)
    return (validate_opacity_tf(np.asarray(doc["t_o"])),
            validate_color_tf(np.asarray(doc["t_c"])))


@click.group()
def cli():
    """Generative volume-rendering model toolkit."""


@cli.command("gen-data")
@click.option("--volume", "volume_ref", default="two-shell", show_default=True,
              help="Volume file, or the built-ins 'two-shell'/'solid-cube'.")
@click.option("--n", default=100, show_default=True, help="Sample count.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--color-size", default=64, show_default=True)
@click.option("--opacity-size", default=64, show_default=True)
@click.option("--holdout", default=2000, show_default=True,
              help="Requested hold-out count (capped at 10%).")
@click.option("--illumination", default="none", show_default=True,
              type=click.Choice(["none", "direct"]))
def gen_data(volume_ref, n, seed, out_dir, color_size, opacity_size,
             holdout, illumination):
    """Render a dataset of (viewpoint, TF) samples."""
    from .paramgen import generate_dataset
    vol = _load_volume(volume_ref)
    manifest = generate_dataset(
        vol, n, out_dir, seed, color_size=color_size,
        opacity_size=opacity_size, illumination=illumination,
        holdout=holdout, volume_ref=volume_ref)
    _emit({"command": "gen-data", "out": out_dir,
           "manifest": manifest.to_dict()})


@cli.command("train-opacity")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=25, show_default=True)
@click.option("--latent-dim", default=8, show_default=True)
@click.option("--image-size", default=None, type=int,
              help="Defaults to the dataset's opacity size.")
@click.option("--batch-size", default=64, show_default=True)
@click.option("--lr", default=2e-4, show_default=True)
@click.option("--checkpoint-dir", default=None, type=click.Path(),
              help="Also write per-epoch checkpoints here.")
def train_opacity(data_dir, out_path, seed, epochs, latent_dim, image_size,
                  batch_size, lr, checkpoint_dir):
    """Train the viewpoint+TF -> opacity image stage."""
    from .checkpoint import save_checkpoint
    from .nets import OpacityGanConfig, TrainingData, train_opacity_gan
    data = TrainingData(data_dir)
    cfg = OpacityGanConfig(
        latent_dim=latent_dim,
        image_size=image_size or data.manifest.opacity_size,
        epochs=epochs, batch_size=batch_size, lr=lr)
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
    bundle, log = train_opacity_gan(data, cfg, seed,
                                    checkpoint_dir=checkpoint_dir)
    save_checkpoint(bundle, out_path)
    epochs_log = [e for e in log if e.get("epoch_end")]
    _emit({"command": "train-opacity", "out": out_path,
           "config": dataclasses.asdict(cfg),
           "d_accuracy_per_epoch": [e["d_accuracy"] for e in epochs_log],
           "final_g_ae": next(e["g_ae"] for e in reversed(log) if "g_ae" in e)})


@cli.command("train-translation")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True),
              help="Checkpoint with a trained opacity stage.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=24, show_default=True)
@click.option("--lambda", "lambda_l1", default=150.0, show_default=True)
@click.option("--mode", default="gan_l1", show_default=True,
              type=click.Choice(["gan_l1", "gan_only", "l1_only"]))
@click.option("--out-size", default=None, type=int,
              help="Defaults to the dataset's color size.")
@click.option("--batch-size", default=50, show_default=True)
@click.option("--lr", default=8e-5, show_default=True)
@click.option("--checkpoint-dir", default=None, type=click.Path())
def train_translation(data_dir, ckpt_path, out_path, seed, epochs, lambda_l1,
                      mode, out_size, batch_size, lr, checkpoint_dir):
    """Train the opacity -> color translation stage."""
    from .checkpoint import load_checkpoint, save_checkpoint
    from .nets import TranslationGanConfig, TrainingData, train_translation_gan
    data = TrainingData(data_dir)
    bundle, _ = load_checkpoint(ckpt_path)
    cfg = TranslationGanConfig(
        out_size=out_size or data.manifest.color_size,
        opacity_size=bundle.opacity_cfg.image_size,
        lambda_l1=lambda_l1, mode=mode, epochs=epochs,
        batch_size=batch_size, lr=lr)
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
    bundle, log = train_translation_gan(data, bundle, cfg, seed,
                                        checkpoint_dir=checkpoint_dir)
    save_checkpoint(bundle, out_path)
    epochs_log = [e for e in log if e.get("epoch_end")]
    _emit({"command": "train-translation", "out": out_path,
           "config": dataclasses.asdict(cfg),
           "d_accuracy_per_epoch": [e["d_accuracy"] for e in epochs_log]})


@cli.command("synth")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--view", "view_text", required=True,
              help="azimuth,elevation,roll,distance")
@click.option("--tf", "tf_path", required=True, type=click.Path(exists=True),
              help='JSON file with "t_o" (256) and "t_c" (3x256 Lab).')
@click.option("--out", "out_path", required=True, type=click.Path())
def synth(ckpt_path, view_text, tf_path, out_path):
    """Synthesize a color image from the trained model."""
    from .checkpoint import load_checkpoint
    from .paramgen import save_rgb_png
    bundle, _ = load_checkpoint(ckpt_path)
    view = _parse_view(view_text)
    t_o, t_c = _load_tf(tf_path)
    img = bundle.synthesize(view.encode().astype(np.float32),
                            t_o.astype(np.float32), t_c.astype(np.float32))
    save_rgb_png(img, out_path)
    _emit({"command": "synth", "out": out_path,
           "size": [img.shape[1], img.shape[0]]})


@cli.command("render")
@click.option("--volume", "volume_ref", default="two-shell", show_default=True)
@click.option("--view", "view_text", required=True)
@click.option("--tf", "tf_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--size", default=64, show_default=True)
@click.option("--illumination", default="none", show_default=True,
              type=click.Choice(["none", "direct"]))
def render_cmd(volume_ref, view_text, tf_path, out_path, size, illumination):
    """Render a ground-truth image with the reference renderer."""
    from .paramgen import save_rgb_png
    from .renderer import RenderConfig, render
    vol = _load_volume(volume_ref)
    view = _parse_view(view_text)
    t_o, t_c = _load_tf(tf_path)
    cfg = RenderConfig(size=(size, size), illumination=illumination)
    color, _ = render(vol, view, t_o, t_c, cfg)
    save_rgb_png(color, out_path)
    _emit({"command": "render", "out": out_path, "size": [size, size]})


@cli.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
def eval_cmd(ckpt_path, data_dir, out_path):
    """Evaluate hold-out RMSE and color EMD."""
    from .checkpoint import load_checkpoint
    from .evalx import evaluate_holdout
    from .nets import TrainingData
    bundle, _ = load_checkpoint(ckpt_path)
    data = TrainingData(data_dir)
    report = evaluate_holdout(bundle, data)
    if out_path:
        report.save(out_path)
    _emit({"command": "eval", "mean_rmse": report.mean_rmse,
           "mean_emd": report.mean_emd,
           "n_samples": len(report.rmse_per_sample), "out": out_path})


@cli.command("baselines")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpts", multiple=True,
              help="label=path, repeatable (e.g. gan_l1=model.vgan).")
@click.option("--out", "out_path", default="baselines.csv", show_default=True,
              type=click.Path())
def baselines(data_dir, ckpts, out_path):
    """Run the nearest-neighbor baseline plus any model variants."""
    from .checkpoint import load_checkpoint
    from .evalx import baseline_suite, write_comparison_table
    from .nets import TrainingData
    variants = {}
    for spec_text in ckpts:
        if "=" not in spec_text:
            raise click.UsageError("--ckpt expects label=path")
        label, path = spec_text.split("=", 1)
        variants[label], _ = load_checkpoint(path)
    data = TrainingData(data_dir)
    reports = baseline_suite(variants, data)
    write_comparison_table(reports, out_path)
    _emit({"command": "baselines", "out": out_path,
           "table": [{"variant": r.label, "mean_rmse": r.mean_rmse,
                      "mean_emd": r.mean_emd} for r in reports]})


@cli.command("study")
@click.option("--kind", required=True,
              type=click.Choice(["latent_dim", "lambda"]))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=5, show_default=True,
              help="Epochs per stage per configuration.")
@click.option("--image-size", default=None, type=int)
def study(kind, data_dir, out_dir, seed, epochs, image_size):
    """Train and evaluate every configuration of a study."""
    from .evalx import study_harness
    from .nets import OpacityGanConfig, TrainingData, TranslationGanConfig
    data = TrainingData(data_dir)
    op_cfg = OpacityGanConfig(
        image_size=image_size or data.manifest.opacity_size, epochs=epochs)
    tr_cfg = TranslationGanConfig(
        out_size=data.manifest.color_size,
        opacity_size=op_cfg.image_size, epochs=epochs)
    reports = study_harness(kind, data, op_cfg, tr_cfg, seed=seed,
                            out_dir=out_dir)
    _emit({"command": "study", "kind": kind, "out": out_dir,
           "results": [{"config": r.label, "mean_rmse": r.mean_rmse,
                        "mean_emd": r.mean_emd} for r in reports]})


@cli.command("latent-build")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--n", default=10_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tsne-n", default=1000, show_default=True,
              help="Subsample size for the 2D projection.")
@click.option("--out", "out_path", required=True, type=click.Path())
def latent_build(ckpt_path, data_dir, n, seed, tsne_n, out_path):
    """Sample the latent space and build the 2D projection layout."""
    from .checkpoint import load_checkpoint
    from .latent import project_tsne, sample_latent_space, svd_falloff
    from .nets import TrainingData
    bundle, _ = load_checkpoint(ckpt_path)
    data = TrainingData(data_dir)
    samples = sample_latent_space(bundle, data.t_o[data.train_ids],
                                 n=n, seed=seed)
    spectrum = svd_falloff(samples.codes)
    keep = min(tsne_n, n)
    rng = np.random.default_rng(seed)
    sel = rng.choice(n, size=keep, replace=False)
    layout = project_tsne(samples.codes[sel], samples.decoded[sel], seed=seed)
    with open(out_path, "w") as f:
        f.write(layout.to_json())
    _emit({"command": "latent-build", "out": out_path, "n_sampled": n,
           "n_projected": keep,
           "singular_values": [float(s) for s in spectrum],
           "kl_initial": layout.kl_initial, "kl_final": layout.kl_final})


@cli.command("serve")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--volume", "volume_ref", default=None,
              help="Optional volume for /render/groundtruth.")
@click.option("--data", "data_dir", default=None, type=click.Path(exists=True),
              help="Dataset used to build the latent layout on demand.")
@click.option("--layout", "layout_path", default=None,
              type=click.Path(exists=True))
@click.option("--host", default=None, help="Default env VOLGEN_HOST or 127.0.0.1.")
@click.option("--port", default=None, type=int,
              help="Default env VOLGEN_PORT or 8711.")
def serve(ckpt_path, volume_ref, data_dir, layout_path, host, port):
    """Serve the HTTP API over a checkpoint."""
    import uvicorn
    from .checkpoint import load_checkpoint
    from .latent import ProjectionLayout
    from .service import ServiceState, create_app
    bundle, _ = load_checkpoint(ckpt_path)
    volume = _load_volume(volume_ref) if volume_ref else None
    layout = None
    if layout_path:
        with open(layout_path) as f:
            layout = ProjectionLayout.from_json(f.read())
    train_tfs = None
    if data_dir:
        from .nets import TrainingData
        data = TrainingData(data_dir)
        train_tfs = data.t_o[data.train_ids]
    state = ServiceState(bundle=bundle, volume=volume, layout=layout,
                         train_tfs=train_tfs)
    host = host or os.environ.get("VOLGEN_HOST", "127.0.0.1")
    port = port or int(os.environ.get("VOLGEN_PORT", "8711"))
    _emit({"command": "serve", "host": host, "port": port})
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


@cli.command("grad-check")
@click.option("--trials", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
def grad_check(trials, seed):
    """Run the finite-difference oracle over every tensor operation."""
    from .tensor.gradcheck import run_suite
    result = run_suite(trials=trials, seed=seed)
    _emit({"command": "grad-check", **result})
    if not result["passed"]:
        raise click.ClickException("gradient checks failed")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return 0 if exc.exit_code == 0 else 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except Exception as exc:  # runtime failure
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
