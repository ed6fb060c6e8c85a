"""Multi-stage curriculum construction with linearly increasing corruption.

A schedule is a list of stages whose complexity score c in [0, 1] rises
linearly from c_min to c_max.  At stage i, round(c_i * L) letter
positions of each training sentence are resampled through the attached
channel; targets always stay the original text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .channel import ConfusionModel, LETTERS
from .corpus import Corpus, Sentence


@dataclass(frozen=True)
class Stage:
    stage_id: int
    complexity: float
    epochs: int


@dataclass(frozen=True)
class CurriculumSchedule:
    stages: tuple[Stage, ...]
    channel: ConfusionModel | None = None

    def __post_init__(self):
        cs = [s.complexity for s in self.stages]
        if any(not 0.0 <= c <= 1.0 for c in cs):
            raise ValueError("complexities must lie in [0, 1]")
        if any(b <= a for a, b in zip(cs, cs[1:])):
            raise ValueError("complexities must be strictly increasing")

    @property
    def total_epochs(self) -> int:
        return sum(s.epochs for s in self.stages)


def make_schedule(
    n_stages: int,
    c_min: float,
    c_max: float,
    epochs_per_stage: int,
    channel: ConfusionModel | None = None,
) -> CurriculumSchedule:
    """Linearly spaced complexities; a single stage sits at c_max."""
    if n_stages < 1:
        raise ValueError("need at least one stage")
    if not 0.0 <= c_min <= c_max <= 1.0:
        raise ValueError(f"need 0 <= c_min <= c_max <= 1, got ({c_min}, {c_max})")
    if n_stages == 1:
        cs = [c_max]
    else:
        cs = [c_min + i * (c_max - c_min) / (n_stages - 1) for i in range(n_stages)]
    stages = tuple(
        Stage(stage_id=i + 1, complexity=c, epochs=epochs_per_stage)
        for i, c in enumerate(cs)
    )
    return CurriculumSchedule(stages=stages, channel=channel)


def default_c_max(channel: ConfusionModel) -> float:
    """Deployment-matched endpoint: the channel's empirical letter error rate."""
    return 1.0 - channel.diagonal_accuracy()


def corrupt_fraction(
    sentence: str,
    channel: ConfusionModel,
    c: float,
    rng: np.random.Generator,
) -> str:
    """Permute round(c * L) letter positions through the channel rows.

    Positions are chosen uniformly without replacement over the L letter
    (non-space) positions.  Each picked position draws a *different*
    letter from the channel row with the diagonal removed and
    renormalized, so c is the realized corruption rate.  With c equal to
    the channel's letter-error rate (the default final-stage
    complexity), the stage distribution matches what full channel noise
    produces at deployment.  Letters whose row has no off-diagonal mass
    (identity rows) are left unchanged.
    """
    if channel.sampling is None:
        raise ValueError("channel has no sampling matrix")
    chars = list(sentence)
    letter_pos = [i for i, ch in enumerate(chars) if ch != " "]
    n_pick = int(round(c * len(letter_pos)))
    if n_pick == 0:
        return sentence
    picked = rng.choice(len(letter_pos), size=n_pick, replace=False)
    for j in picked:
        i = letter_pos[j]
        w = LETTERS.find(chars[i])
        if w < 0:
            raise ValueError(f"symbol outside alphabet: {chars[i]!r}")
        off = channel.sampling[w].copy()
        off[w] = 0.0
        mass = off.sum()
        if mass > 0:
            chars[i] = LETTERS[rng.choice(26, p=off / mass)]
    return "".join(chars)


def build_stage_dataset(
    corpus: Corpus,
    schedule: CurriculumSchedule,
    stage_id: int,
    seed: int = 0,
    split: str = "train",
) -> list[tuple[str, str]]:
    """(noisy input, clean target) pairs for one stage; deterministic in seed."""
    if schedule.channel is None:
        raise ValueError("schedule has no channel attached")
    stage = next((s for s in schedule.stages if s.stage_id == stage_id), None)
    if stage is None:
        raise ValueError(f"no stage with id {stage_id}")
    sentences: list[Sentence] = corpus.channel_subset(split)
    if not sentences:
        raise ValueError(f"corpus split {split!r} is empty")
    pairs: list[tuple[str, str]] = []
    for i, sent in enumerate(sentences):
        # per-sentence derived stream keeps sentences independent and parallelizable
        rng = np.random.default_rng([seed, stage_id, i])
        noisy = corrupt_fraction(sent.normalized, schedule.channel, stage.complexity, rng)
        pairs.append((noisy, sent.target))
    return pairs


def export_stage_jsonl(pairs: list[tuple[str, str]], stage_id: int, path: str) -> None:
    with open(path, "w") as fh:
        for noisy, target in pairs:
            fh.write(json.dumps({"stage": stage_id, "noisy": noisy, "target": target}))
            fh.write("\n")
