"""Command-line entry points for the spelling pipeline.

Exit codes: 0 ok, 2 configuration error, 3 pipeline stage failure.
The output root can also be set with the NEUROSPELL_OUT environment
variable.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import channel as channel_mod
from . import curriculum as curriculum_mod
from . import denoiser as denoiser_mod
from . import metrics as metrics_mod
from . import pipeline, sigproc, stats
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, config_yaml, load_config
from .corpus import LETTERS


@click.group()
def cli():
    """Desk-scale EEG spelling and sentence-denoising experiments."""


@cli.group()
def config():
    """Configuration helpers."""


@config.command("init")
@click.option("-o", "--output", type=click.Path(), default=None, help="write instead of print")
def config_init(output):
    """Print (or write) the full default configuration."""
    text = config_yaml(ExperimentConfig())
    if output:
        with open(output, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


def _load(config_path: str) -> ExperimentConfig:
    return load_config(config_path) if config_path else ExperimentConfig()


@cli.command("synth-data")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--outdir", type=click.Path(), required=True)
def synth_data(config_path, outdir):
    """Generate synthetic per-letter recordings into binary containers."""
    cfg = _load(config_path)
    os.makedirs(outdir, exist_ok=True)
    sp = cfg.sigproc
    for letter in LETTERS:
        rec = sigproc.synth_eeg(
            letter,
            trials=sp.trials_per_letter,
            rate=sp.rate,
            snr=sp.snr,
            seed=sp.seed * 100 + ord(letter),
            n_channels=sp.n_channels,
        )
        sigproc.save_recording(rec, os.path.join(outdir, f"letter_{letter}.rec"))
    click.echo(f"wrote 26 recordings to {outdir}")


@cli.command("train-stage1")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--outdir", type=click.Path(), required=True)
def train_stage1_cmd(config_path, outdir):
    """Train the letter classifier on synthetic data; save checkpoint + history."""
    cfg = _load(config_path)
    os.makedirs(outdir, exist_ok=True)
    model, history, _ = pipeline.train_stage1(cfg)
    save_checkpoint(model, model.config.to_dict(), os.path.join(outdir, "stage1.ckpt"))
    with open(os.path.join(outdir, "stage1_history.json"), "w") as fh:
        json.dump(
            {
                "train_loss": history.train_loss,
                "val_top1": history.val_top1,
                "val_top3": history.val_top3,
                "val_top5": history.val_top5,
            },
            fh,
            indent=1,
        )
    click.echo(
        f"final val top-1 {history.val_top1[-1]:.3f}, "
        f"top-3 {history.val_top3[-1]:.3f}, top-5 {history.val_top5[-1]:.3f}"
    )


@cli.command("export-channel")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", type=click.Path(), required=True)
def export_channel(config_path, output):
    """Build the confusion channel named in the config and save it as JSON."""
    cfg = _load(config_path)
    model = pipeline.build_channel(cfg)
    channel_mod.save_model(model, output)
    click.echo(f"wrote {output} (k={model.k}, diag={model.diagonal_accuracy():.3f})")


@cli.command("import-distributions")
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--k", type=int, default=3, show_default=True)
def import_distributions(csv_path, output, k):
    """Aggregate external classifier output distributions into a channel."""
    model = channel_mod.import_distributions_csv(csv_path)
    model = channel_mod.truncate_topk(model, k)
    channel_mod.save_model(model, output)
    click.echo(f"wrote {output} from {int(model.counts.sum())} samples")


@cli.command("build-curriculum")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--channel", "channel_path", type=click.Path(exists=True), required=True)
@click.option("-o", "--outdir", type=click.Path(), required=True)
def build_curriculum(config_path, channel_path, outdir):
    """Export per-stage (noisy, target) JSON-lines datasets."""
    cfg = _load(config_path)
    os.makedirs(outdir, exist_ok=True)
    noise_channel = channel_mod.load_model(channel_path)
    corpus = pipeline.load_experiment_corpus(cfg)
    schedule = pipeline.build_schedule(cfg, noise_channel)
    for stage in schedule.stages:
        pairs = curriculum_mod.build_stage_dataset(
            corpus, schedule, stage.stage_id, seed=cfg.curriculum.seed
        )
        curriculum_mod.export_stage_jsonl(
            pairs, stage.stage_id, os.path.join(outdir, f"stage_{stage.stage_id}.jsonl")
        )
    click.echo(f"wrote {len(schedule.stages)} stage files to {outdir}")


@cli.command("train-denoiser")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--channel", "channel_path", type=click.Path(exists=True), required=True)
@click.option("-o", "--output", type=click.Path(), required=True)
def train_denoiser_cmd(config_path, channel_path, output):
    """Curriculum-train the denoiser and save its checkpoint."""
    cfg = _load(config_path)
    noise_channel = channel_mod.load_model(channel_path)
    corpus = pipeline.load_experiment_corpus(cfg)
    schedule = pipeline.build_schedule(cfg, noise_channel)
    model, history = pipeline.train_denoiser(cfg, schedule, corpus)
    save_checkpoint(model, model.config.arch_dict(), output)
    final = history[-1].epoch_loss[-1]
    click.echo(f"wrote {output} (final stage loss {final:.4f})")


def _denoiser_from_config(cfg: ExperimentConfig, ckpt: str) -> denoiser_mod.Seq2SeqModel:
    dn = cfg.denoiser
    model_cfg = denoiser_mod.DenoiserConfig(
        d_model=dn.d_model,
        n_heads=dn.n_heads,
        enc_layers=dn.enc_layers,
        dec_layers=dn.dec_layers,
        ff_dim=dn.ff_dim,
        max_len=dn.max_len,
        beam=dn.beam,
    )
    model = denoiser_mod.Seq2SeqModel(model_cfg)
    load_checkpoint(model, model.config.arch_dict(), ckpt)
    return model


@cli.command("decode")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("-i", "--input", "input_path", type=click.Path(exists=True), required=True,
              help='JSON-lines with a "noisy" field')
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--beam", type=int, default=None)
def decode_cmd(config_path, ckpt, input_path, output, beam):
    """Decode noisy sentences from JSON-lines to JSON-lines."""
    cfg = _load(config_path)
    model = _denoiser_from_config(cfg, ckpt)
    with open(input_path) as fh:
        noisy = [json.loads(line)["noisy"] for line in fh if line.strip()]
    decoded = pipeline.decode_sentences(model, noisy, beam=beam or cfg.denoiser.beam)
    with open(output, "w") as fh:
        for n_s, d_s in zip(noisy, decoded):
            fh.write(json.dumps({"noisy": n_s, "decoded": d_s}) + "\n")
    click.echo(f"decoded {len(noisy)} sentences to {output}")


@cli.command("evaluate")
@click.option("--refs", type=click.Path(exists=True), required=True, help="one reference per line")
@click.option("--hyps", type=click.Path(exists=True), required=True, help="one hypothesis per line")
@click.option("-o", "--out-prefix", required=True)
def evaluate_cmd(refs, hyps, out_prefix):
    """Full metric report (JSON + CSV) for aligned text files."""
    with open(refs) as fh:
        ref_lines = [line.rstrip("\n") for line in fh if line.strip()]
    with open(hyps) as fh:
        hyp_lines = [line.rstrip("\n") for line in fh if line.strip()]
    report = metrics_mod.evaluate_pairs(ref_lines, hyp_lines)
    report.to_json(out_prefix + ".json")
    report.to_csv(out_prefix + ".csv")
    click.echo(
        f"CER {report.corpus['cer']:.2f}%  WER {report.corpus['wer']:.2f}%  "
        f"BLEU-4 {report.corpus['bleu4']:.2f}  ROUGE-L {report.corpus['rL']:.2f}"
    )


@cli.command("run")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--outdir", type=click.Path(), default=None)
@click.option("--name", default="run", show_default=True)
def run_cmd(config_path, outdir, name):
    """Execute the full pipeline end to end."""
    cfg = _load(config_path)
    run_dir = pipeline.run(cfg, outdir=outdir, run_name=name)
    click.echo(f"results in {run_dir}")


@cli.command("sweep")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--axis", type=click.Choice(["k", "space", "curriculum"]), required=True)
@click.option("-o", "--outdir", type=click.Path(), default=None)
def sweep_cmd(config_path, axis, outdir):
    """Ablation sweep along one axis with shared seeds."""
    cfg = _load(config_path)
    rows = pipeline.sweep(cfg, axis, outdir=outdir)
    for r in rows:
        click.echo(f"{axis}={r['value']}: CER {r['cer']:.2f}% (raw {r['raw_cer']:.2f}%)")


@cli.command("stats")
@click.option("-i", "--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--q", type=float, default=0.05, show_default=True)
def stats_cmd(input_path, output, q):
    """Batch statistics: CSV of test specs in, CSV of results out."""
    stats.run_batch_csv(input_path, output, q=q)
    click.echo(f"wrote {output}")


def main():
    try:
        cli(standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except pipeline.StageFailure as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(3)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(1)


if __name__ == "__main__":
    main()
