"""Experiment configuration: nested dataclasses with YAML (de)serialization.

Every knob lives here with its default; `config init` dumps the full
tree so nothing is hidden in code.  Loading validates the schema
(unknown keys are errors) and checks referenced paths before any
compute starts.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class CorpusConfig:
    path: str = "bundled:story_corpus.txt"  # bundled:<name> or a filesystem path
    format: str = "plain-lines"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 7


@dataclass
class SigprocConfig:
    rate: float = 250.0
    n_channels: int = 32
    band: tuple[float, float] = (1.0, 70.0)
    notches: tuple[float, ...] = (50.0, 100.0, 150.0)
    epoch_window: tuple[float, float] = (-1.0, 3.0)
    snr: float = 2.0
    trials_per_letter: int = 25
    seed: int = 11


@dataclass
class Stage1TrainConfig:
    embed_dim: int = 64
    conv_channels: tuple[int, int] = (8, 16)
    lr: float = 0.2
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 50
    use_cl: bool = True
    cl_sign_sensitive: bool = False
    jitter: float = 0.05
    seed: int = 13


@dataclass
class ChannelConfig:
    source: str = "synthetic"  # synthetic | stage1 | import
    k: int = 3
    diag_accuracy: float = 0.6  # synthetic source only
    import_path: str = ""  # import source only
    seed: int = 17


@dataclass
class CurriculumConfig:
    n_stages: int = 3
    c_min: float = 0.2
    c_max: float | None = None  # None: channel letter-error rate
    epochs_per_stage: int = 10
    seed: int = 19


@dataclass
class DenoiserTrainConfig:
    d_model: int = 128
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    ff_dim: int = 256
    max_len: int = 384
    batch_size: int = 32
    lr: float = 1e-3
    warmup_steps: int = 100
    beam: int = 4
    freeze_corruption: bool = False
    seed: int = 23


@dataclass
class EvalConfig:
    space_mode: str = "keep"
    corrupt_seed: int = 29
    fdr_q: float = 0.05


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    sigproc: SigprocConfig = field(default_factory=SigprocConfig)
    stage1: Stage1TrainConfig = field(default_factory=Stage1TrainConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    denoiser: DenoiserTrainConfig = field(default_factory=DenoiserTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs"


def _from_dict(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type[0].isupper() and "Config" in f.type
        ):
            sub_cls = globals()[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _from_dict(sub_cls, value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = _to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}")
    config = _from_dict(ExperimentConfig, data)
    validate(config)
    return config


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(_to_dict(config), fh, sort_keys=False)


def config_yaml(config: ExperimentConfig) -> str:
    return yaml.safe_dump(_to_dict(config), sort_keys=False)


def validate(config: ExperimentConfig) -> None:
    c = config
    if not c.corpus.path.startswith("bundled:") and not os.path.exists(c.corpus.path):
        raise ConfigError(f"corpus path does not exist: {c.corpus.path}")
    if abs(sum(c.corpus.fractions) - 1.0) > 1e-9:
        raise ConfigError("corpus fractions must sum to 1")
    if c.channel.source not in ("synthetic", "stage1", "import"):
        raise ConfigError(f"unknown channel source {c.channel.source!r}")
    if c.channel.source == "import" and not os.path.exists(c.channel.import_path):
        raise ConfigError(f"channel import path does not exist: {c.channel.import_path}")
    if not 1 <= c.channel.k <= 26:
        raise ConfigError("channel k must be in 1..26")
    if c.eval.space_mode not in ("keep", "strip"):
        raise ConfigError(f"unknown space_mode {c.eval.space_mode!r}")
    if c.curriculum.n_stages < 1:
        raise ConfigError("curriculum needs at least one stage")
