"""Experiment orchestration: pipeline runs, sweeps, persistence, plots.

A run executes synth/ingest -> stage-1 -> channel -> curriculum ->
denoiser -> decode -> metrics -> stats, writing every artifact under a
run directory together with a manifest that reproduces it.
"""

from __future__ import annotations

import dataclasses
import json
import os
import platform
from importlib.metadata import version as pkg_version

import numpy as np
import torch

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import channel as channel_mod
from . import corpus as corpus_mod
from . import curriculum as curriculum_mod
from . import denoiser as denoiser_mod
from . import metrics as metrics_mod
from . import sigproc, stats, trajectory
from . import stage1 as stage1_mod
from .checkpoint import save_checkpoint
from .config import ExperimentConfig, config_yaml
from .datagen import bundled_corpus_path

OUTPUT_ROOT_ENV = "NEUROSPELL_OUT"


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage


def load_experiment_corpus(config: ExperimentConfig) -> corpus_mod.Corpus:
    path = config.corpus.path
    if path.startswith("bundled:"):
        path = bundled_corpus_path(path.split(":", 1)[1])
    return corpus_mod.load_corpus(
        path,
        format=config.corpus.format,
        fractions=config.corpus.fractions,
        seed=config.corpus.seed,
    )


def make_synthetic_dataset(
    config: ExperimentConfig,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Synthetic PSD features + rasters + labels for all 26 letters."""
    sp = config.sigproc
    features, rasters, letters = [], [], []
    for letter in corpus_mod.LETTERS:
        rec = sigproc.synth_eeg(
            letter,
            trials=sp.trials_per_letter,
            rate=sp.rate,
            snr=sp.snr,
            seed=sp.seed * 100 + ord(letter),
            n_channels=sp.n_channels,
        )
        rec = sigproc.preprocess(rec, band=sp.band, notches=sp.notches)
        epochs, _ = sigproc.epoch(rec, *sp.epoch_window)
        for trial_idx, ep in enumerate(epochs):
            feat = sigproc.psd(ep, band=sp.band)
            features.append(feat.psd)
            traj = trajectory.synth_trajectory(
                letter, jitter=config.stage1.jitter, seed=sp.seed * 1000 + trial_idx
            )
            rasters.append(trajectory.rasterize(traj).pixels.astype(np.float64) / 255.0)
            letters.append(letter)
    feats = np.stack(features)
    # per-feature standardization keeps conv activations in a sane range
    mu = feats.mean(axis=0, keepdims=True)
    sd = feats.std(axis=0, keepdims=True) + 1e-9
    feats = (feats - mu) / sd
    return feats, np.stack(rasters), letters


def train_stage1(
    config: ExperimentConfig,
    dataset: tuple[np.ndarray, np.ndarray, list[str]] | None = None,
) -> tuple[stage1_mod.Stage1Model, stage1_mod.TrainHistory, tuple]:
    if dataset is None:
        dataset = make_synthetic_dataset(config)
    features, rasters, letters = dataset
    s1 = config.stage1
    model_cfg = stage1_mod.Stage1Config(
        n_channels=features.shape[1],
        n_bins=features.shape[2],
        embed_dim=s1.embed_dim,
        conv_channels=s1.conv_channels,
        lr=s1.lr,
        momentum=s1.momentum,
        batch_size=s1.batch_size,
        epochs=s1.epochs,
        use_cl=s1.use_cl,
        cl_sign_sensitive=s1.cl_sign_sensitive,
        seed=s1.seed,
    )
    torch.manual_seed(s1.seed)  # weight init must not depend on ambient RNG state
    model = stage1_mod.Stage1Model(model_cfg)
    history = stage1_mod.train(model, features, rasters, letters)
    return model, history, dataset


def build_channel(
    config: ExperimentConfig,
    stage1_model: stage1_mod.Stage1Model | None = None,
    dataset: tuple | None = None,
) -> channel_mod.ConfusionModel:
    src = config.channel.source
    if src == "synthetic":
        model = channel_mod.synthetic_confusion(
            config.channel.diag_accuracy, seed=config.channel.seed
        )
    elif src == "import":
        model = channel_mod.import_distributions_csv(config.channel.import_path)
    elif src == "stage1":
        if stage1_model is None:
            stage1_model, _, dataset = train_stage1(config, dataset)
        features, _, letters = dataset
        dists = stage1_mod.collect_distributions(stage1_model, features, letters)
        model = channel_mod.aggregate(dists)
    else:
        raise ValueError(f"unknown channel source {src!r}")
    return channel_mod.truncate_topk(model, config.channel.k)


def build_schedule(
    config: ExperimentConfig, noise_channel: channel_mod.ConfusionModel
) -> curriculum_mod.CurriculumSchedule:
    cur = config.curriculum
    c_max = cur.c_max
    if c_max is None:
        c_max = curriculum_mod.default_c_max(noise_channel)
    c_min = cur.c_min
    if c_min >= c_max:  # low-noise channels: keep the linear ramp non-degenerate
        c_min = c_max / 2
    return curriculum_mod.make_schedule(
        cur.n_stages, c_min, c_max, cur.epochs_per_stage, channel=noise_channel
    )


def train_denoiser(
    config: ExperimentConfig,
    schedule: curriculum_mod.CurriculumSchedule,
    corpus: corpus_mod.Corpus,
) -> tuple[denoiser_mod.Seq2SeqModel, list[denoiser_mod.StageHistory]]:
    dn = config.denoiser
    model_cfg = denoiser_mod.DenoiserConfig(
        d_model=dn.d_model,
        n_heads=dn.n_heads,
        enc_layers=dn.enc_layers,
        dec_layers=dn.dec_layers,
        ff_dim=dn.ff_dim,
        max_len=dn.max_len,
        batch_size=dn.batch_size,
        lr=dn.lr,
        warmup_steps=dn.warmup_steps,
        beam=dn.beam,
        seed=dn.seed,
        freeze_corruption=dn.freeze_corruption,
    )
    torch.manual_seed(dn.seed)  # weight init must not depend on ambient RNG state
    model = denoiser_mod.Seq2SeqModel(model_cfg)
    history = denoiser_mod.train_curriculum(model, schedule, corpus, seed=dn.seed)
    return model, history


def corrupt_split(
    config: ExperimentConfig,
    corpus: corpus_mod.Corpus,
    noise_channel: channel_mod.ConfusionModel,
    split: str = "test",
) -> tuple[list[str], list[str]]:
    """(noisy, original-target) lists for one split, full channel noise."""
    rng = np.random.default_rng(config.eval.corrupt_seed)
    noisy, targets = [], []
    for sent in corpus.channel_subset(split):
        noisy.append(
            channel_mod.corrupt(
                sent.normalized, noise_channel, space_mode=config.eval.space_mode, rng=rng
            )
        )
        targets.append(sent.target)
    return noisy, targets


def decode_sentences(
    model: denoiser_mod.Seq2SeqModel, noisy: list[str], beam: int
) -> list[str]:
    torch.set_num_threads(1)
    if beam == 1:
        return decode_greedy_batch(model, noisy)
    return [denoiser_mod.decode(model, s, beam=beam) for s in noisy]


def decode_greedy_batch(
    model: denoiser_mod.Seq2SeqModel, noisy: list[str], batch_size: int = 64
) -> list[str]:
    """Greedy decoding, batched over sentences for sweep-scale evaluation."""
    tok = model.tokenizer
    cfg = model.config
    out: list[str] = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(noisy), batch_size):
            chunk = noisy[start : start + batch_size]
            src = denoiser_mod._pad_batch([tok.encode(s)[: cfg.max_len] for s in chunk])
            memory, memory_pad = model.encode(src)
            max_gen = min(cfg.max_len - 1, 2 * src.shape[1] + 10)
            ids = torch.full((len(chunk), 1), denoiser_mod.CharTokenizer.BOS, dtype=torch.long)
            done = torch.zeros(len(chunk), dtype=torch.bool)
            for _ in range(max_gen):
                logits = model.decode_logits(ids, memory, memory_pad)
                last = logits[:, -1]
                # PAD/BOS are never valid generations
                last[:, denoiser_mod.CharTokenizer.PAD] = float("-inf")
                last[:, denoiser_mod.CharTokenizer.BOS] = float("-inf")
                nxt = last.argmax(dim=1)
                nxt[done] = denoiser_mod.CharTokenizer.PAD
                done |= nxt == denoiser_mod.CharTokenizer.EOS
                ids = torch.cat([ids, nxt.unsqueeze(1)], dim=1)
                if bool(done.all()):
                    break
            for row in ids.tolist():
                out.append(tok.decode(row))
    return out


def _plot_losses(path: str, stage1_hist, denoiser_hist) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    if stage1_hist is not None:
        axes[0].plot(stage1_hist.train_loss, label="train loss")
        axes[0].plot(stage1_hist.val_top1, label="val top-1")
        axes[0].set_title("letter classifier")
        axes[0].legend()
    losses = [l for h in denoiser_hist for l in h.epoch_loss]
    axes[1].plot(losses)
    for h in denoiser_hist:
        axes[1].axvline(sum(len(g.epoch_loss) for g in denoiser_hist[: denoiser_hist.index(h)]),
                        color="gray", lw=0.5)
    axes[1].set_title("denoiser (stage boundaries marked)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def run(config: ExperimentConfig, outdir: str | None = None, run_name: str = "run") -> str:
    """Execute the full pipeline; returns the results directory."""
    root = outdir or os.environ.get(OUTPUT_ROOT_ENV, config.output_dir)
    run_dir = os.path.join(root, run_name)
    os.makedirs(run_dir, exist_ok=True)

    def marker(stage: str) -> None:
        with open(os.path.join(run_dir, "STAGE"), "w") as fh:
            fh.write(stage + "\n")

    with open(os.path.join(run_dir, "manifest.yaml"), "w") as fh:
        fh.write(config_yaml(config))
        fh.write(f"# neurospell {pkg_version('neurospell')} on {platform.platform()}\n")

    stage = "corpus"
    try:
        marker(stage)
        corpus = load_experiment_corpus(config)

        stage = "channel"
        marker(stage)
        stage1_model = stage1_hist = None
        if config.channel.source == "stage1":
            stage1_model, stage1_hist, dataset = train_stage1(config)
            save_checkpoint(
                stage1_model,
                stage1_model.config.to_dict(),
                os.path.join(run_dir, "stage1.ckpt"),
            )
            noise_channel = build_channel(config, stage1_model, dataset)
        else:
            noise_channel = build_channel(config)
        channel_mod.save_model(noise_channel, os.path.join(run_dir, "channel.json"))

        stage = "curriculum"
        marker(stage)
        schedule = build_schedule(config, noise_channel)
        for s in schedule.stages:
            pairs = curriculum_mod.build_stage_dataset(
                corpus, schedule, s.stage_id, seed=config.curriculum.seed
            )
            curriculum_mod.export_stage_jsonl(
                pairs, s.stage_id, os.path.join(run_dir, f"stage_{s.stage_id}.jsonl")
            )

        stage = "denoiser"
        marker(stage)
        model, denoiser_hist = train_denoiser(config, schedule, corpus)
        save_checkpoint(model, model.config.arch_dict(), os.path.join(run_dir, "denoiser.ckpt"))

        stage = "decode"
        marker(stage)
        noisy, targets = corrupt_split(config, corpus, noise_channel, split="test")
        decoded = decode_sentences(model, noisy, beam=config.denoiser.beam)
        with open(os.path.join(run_dir, "decoded.jsonl"), "w") as fh:
            for n_s, d_s in zip(noisy, decoded):
                fh.write(json.dumps({"noisy": n_s, "decoded": d_s}) + "\n")

        stage = "metrics"
        marker(stage)
        decoded_report = metrics_mod.evaluate_pairs(targets, decoded)
        raw_report = metrics_mod.evaluate_pairs(targets, noisy)
        decoded_report.to_json(os.path.join(run_dir, "metrics_decoded.json"))
        decoded_report.to_csv(os.path.join(run_dir, "metrics_decoded.csv"))
        raw_report.to_json(os.path.join(run_dir, "metrics_raw.json"))
        raw_report.to_csv(os.path.join(run_dir, "metrics_raw.csv"))

        stage = "stats"
        marker(stage)
        decoded_cer = np.array([r["cer"] for r in decoded_report.per_sentence])
        raw_cer = np.array([r["cer"] for r in raw_report.per_sentence])
        try:
            test = stats.paired_ttest(decoded_cer, raw_cer)
            mask = stats.bh_fdr([test.p_value], q=config.eval.fdr_q)
            stat_rows = [("decoded_vs_raw_cer", test, mask[0])]
        except ValueError:
            stat_rows = []
        with open(os.path.join(run_dir, "stats.csv"), "w") as fh:
            fh.write("comparison,statistic,df,p_value,rejected\n")
            for name, test, rejected in stat_rows:
                df_str = ";".join(str(int(d)) for d in test.df)
                fh.write(f"{name},{test.statistic:.10g},{df_str},{test.p_value:.10g},{rejected}\n")

        stage = "plots"
        marker(stage)
        _plot_losses(os.path.join(run_dir, "losses.svg"), stage1_hist, denoiser_hist)
        marker("done")
    except Exception as exc:
        raise StageFailure(stage, exc) from exc
    return run_dir


SWEEP_K_VALUES = (3, 7, 11, 15, 19, 23, 26)


def sweep(config: ExperimentConfig, axis: str, outdir: str | None = None) -> list[dict]:
    """One run per axis value with shared seeds; emits a comparison table."""
    if axis == "k":
        values = list(SWEEP_K_VALUES)
    elif axis == "space":
        values = ["keep", "strip"]
    elif axis == "curriculum":
        values = ["on", "off"]
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    root = outdir or os.environ.get(OUTPUT_ROOT_ENV, config.output_dir)
    os.makedirs(root, exist_ok=True)
    rows = []
    for value in values:
        cfg = dataclasses.replace(config)
        cfg = _apply_axis(cfg, axis, value)
        run_dir = run(cfg, outdir=root, run_name=f"sweep_{axis}_{value}")
        with open(os.path.join(run_dir, "metrics_decoded.json")) as fh:
            corpus_metrics = json.load(fh)["corpus"]
        with open(os.path.join(run_dir, "metrics_raw.json")) as fh:
            raw_metrics = json.load(fh)["corpus"]
        rows.append(
            {
                "axis": axis,
                "value": value,
                "cer": corpus_metrics["cer"],
                "wer": corpus_metrics["wer"],
                "bleu4": corpus_metrics["bleu4"],
                "rL": corpus_metrics["rL"],
                "raw_cer": raw_metrics["cer"],
                "run_dir": run_dir,
            }
        )
    table_path = os.path.join(root, f"sweep_{axis}.csv")
    with open(table_path, "w") as fh:
        fh.write("axis,value,cer,wer,bleu4,rougeL,raw_cer\n")
        for r in rows:
            fh.write(
                f"{r['axis']},{r['value']},{r['cer']:.6f},{r['wer']:.6f},"
                f"{r['bleu4']:.6f},{r['rL']:.6f},{r['raw_cer']:.6f}\n"
            )
    _plot_sweep(os.path.join(root, f"sweep_{axis}.svg"), rows)
    return rows


def _apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    import copy

    cfg = copy.deepcopy(cfg)
    if axis == "k":
        cfg.channel.k = int(value)
    elif axis == "space":
        cfg.eval.space_mode = value
    elif axis == "curriculum":
        if value == "off":
            # same total budget in a single stage at full complexity
            cfg.curriculum.epochs_per_stage = (
                cfg.curriculum.n_stages * cfg.curriculum.epochs_per_stage
            )
            cfg.curriculum.n_stages = 1
    return cfg


def _plot_sweep(path: str, rows: list[dict]) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    xs = list(range(len(rows)))
    ax.plot(xs, [r["cer"] for r in rows], marker="o", label="decoded CER")
    ax.plot(xs, [r["raw_cer"] for r in rows], marker="s", label="raw CER")
    ax.set_xticks(xs)
    ax.set_xticklabels([str(r["value"]) for r in rows])
    ax.set_xlabel(rows[0]["axis"] if rows else "")
    ax.set_ylabel("CER (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
