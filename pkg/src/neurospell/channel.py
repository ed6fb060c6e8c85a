"""The probabilistic letter-noise channel.

Classifier output distributions are averaged per true letter into a
26x26 row-stochastic confusion matrix, truncated to the top-k entries
per row (renormalized), and used to corrupt sentences by sampling each
letter independently from its row.  Spaces are transmitted noiselessly
(keep mode) or deleted (strip mode).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import LETTERS

N_LETTERS = 26
ROW_TOL = 1e-9


def _check_row_stochastic(matrix: np.ndarray, name: str) -> None:
    if matrix.shape != (N_LETTERS, N_LETTERS):
        raise ValueError(f"{name} must be 26x26")
    if np.any(matrix < 0):
        raise ValueError(f"{name} has negative entries")
    sums = matrix.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        bad = np.argmax(np.abs(sums - 1.0))
        raise ValueError(f"{name} row {LETTERS[bad]!r} sums to {sums[bad]!r}")


@dataclass(frozen=True)
class ConfusionModel:
    """Aggregated per-letter output distributions and their top-k sampling form."""

    agg: np.ndarray  # 26x26, row w = mean output distribution for true letter w
    counts: np.ndarray  # samples per letter
    k: int | None = None
    sampling: np.ndarray | None = None  # top-k truncated + renormalized rows

    def __post_init__(self):
        _check_row_stochastic(self.agg, "agg")
        if self.sampling is not None:
            _check_row_stochastic(self.sampling, "sampling")
            if self.k is None:
                raise ValueError("sampling requires k")
            nonzero = (self.sampling > 0).sum(axis=1)
            if np.any(nonzero > self.k):
                raise ValueError("sampling rows exceed k non-zero entries")

    @property
    def sampling_or_agg(self) -> np.ndarray:
        return self.sampling if self.sampling is not None else self.agg

    def diagonal_accuracy(self) -> float:
        """Mean diagonal of the sampling matrix (per-letter keep probability)."""
        return float(np.mean(np.diag(self.sampling_or_agg)))


def aggregate(dists: list[tuple[np.ndarray, str]]) -> ConfusionModel:
    """Mean output distribution per true letter (rows of the confusion model)."""
    sums = np.zeros((N_LETTERS, N_LETTERS))
    counts = np.zeros(N_LETTERS, dtype=np.int64)
    for probs, letter in dists:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (N_LETTERS,):
            raise ValueError("each distribution must have 26 entries")
        w = LETTERS.index(letter)
        sums[w] += probs
        counts[w] += 1
    missing = [LETTERS[i] for i in range(N_LETTERS) if counts[i] == 0]
    if missing:
        raise ValueError(f"no samples for letters: {', '.join(missing)}")
    agg = sums / counts[:, None]
    agg /= agg.sum(axis=1, keepdims=True)  # remove float accumulation drift
    return ConfusionModel(agg=agg, counts=counts)


def truncate_topk(model: ConfusionModel, k: int) -> ConfusionModel:
    """Keep the k largest entries per row (ties by alphabet order), renormalize."""
    if not 1 <= k <= N_LETTERS:
        raise ValueError(f"k must be in 1..26, got {k}")
    sampling = np.zeros_like(model.agg)
    for w in range(N_LETTERS):
        row = model.agg[w]
        # stable sort on -p keeps alphabet order among ties
        order = np.argsort(-row, kind="stable")[:k]
        sampling[w, order] = row[order]
        sampling[w] /= sampling[w].sum()
    return replace(model, k=k, sampling=sampling)


def corrupt(
    sentence: str,
    model: ConfusionModel,
    space_mode: str = "keep",
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> str:
    """Replace each letter by a draw from its sampling row.

    space_mode "keep" transmits spaces noiselessly; "strip" deletes them.
    """
    if model.sampling is None:
        raise ValueError("model has no sampling matrix; call truncate_topk first")
    if space_mode not in ("keep", "strip"):
        raise ValueError(f"unknown space_mode {space_mode!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    indices: list[int] = []
    for ch in sentence:
        if ch == " ":
            indices.append(-1)
            continue
        w = LETTERS.find(ch)
        if w < 0:
            raise ValueError(f"symbol outside alphabet: {ch!r}")
        indices.append(w)
    idx = np.asarray(indices, dtype=np.int64)
    drawn = idx.copy()
    # one vectorized draw per distinct letter keeps long inputs cheap
    for w in np.unique(idx[idx >= 0]):
        where = np.nonzero(idx == w)[0]
        drawn[where] = rng.choice(N_LETTERS, size=where.size, p=model.sampling[w])
    out: list[str] = []
    for orig, d in zip(idx, drawn):
        if orig < 0:
            if space_mode == "keep":
                out.append(" ")
            continue
        out.append(LETTERS[d])
    return "".join(out)


# Confusable letter groups used as synthetic-channel presets.
DEFAULT_CLUSTERS: tuple[tuple[str, ...], ...] = (
    ("t", "w", "y"),
    ("b", "f", "e"),
    ("z", "k"),
    ("o", "c"),
)

LEAK_FRACTION = 0.05  # share of off-diagonal mass spread over all letters


def synthetic_confusion(
    diag_accuracy: float,
    clusters: tuple[tuple[str, ...], ...] = DEFAULT_CLUSTERS,
    seed: int = 0,
) -> ConfusionModel:
    """Cluster-structured confusion matrix with the given diagonal mass.

    Off-diagonal mass goes mostly to the letter's cluster peers
    (uniformly); a small leak fraction spreads uniformly over the other
    letters.  Letters without peers leak everything uniformly.
    """
    if not 0.0 <= diag_accuracy <= 1.0:
        raise ValueError("diag_accuracy must be in [0, 1]")
    peers: dict[str, list[str]] = {c: [] for c in LETTERS}
    for group in clusters:
        for c in group:
            peers[c] = [o for o in group if o != c]
    agg = np.zeros((N_LETTERS, N_LETTERS))
    off = 1.0 - diag_accuracy
    for w, letter in enumerate(LETTERS):
        agg[w, w] = diag_accuracy
        others = [i for i in range(N_LETTERS) if i != w]
        cluster = [LETTERS.index(c) for c in peers[letter]]
        if cluster:
            leak = off * LEAK_FRACTION
            for i in cluster:
                agg[w, i] += (off - leak) / len(cluster)
            for i in others:
                agg[w, i] += leak / len(others)
        else:
            for i in others:
                agg[w, i] += off / len(others)
    counts = np.ones(N_LETTERS, dtype=np.int64)
    return ConfusionModel(agg=agg, counts=counts)


def save_model(model: ConfusionModel, path: str) -> None:
    payload = {
        "k": model.k,
        "counts": model.counts.tolist(),
        "rows": model.agg.tolist(),
        "sampling": None if model.sampling is None else model.sampling.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path: str) -> ConfusionModel:
    with open(path) as fh:
        payload = json.load(fh)
    sampling = payload.get("sampling")
    return ConfusionModel(
        agg=np.asarray(payload["rows"], dtype=np.float64),
        counts=np.asarray(payload["counts"], dtype=np.int64),
        k=payload.get("k"),
        sampling=None if sampling is None else np.asarray(sampling, dtype=np.float64),
    )


def import_distributions_csv(path: str, tol: float = 1e-3) -> ConfusionModel:
    """Aggregate externally produced classifier outputs.

    CSV rows: true letter followed by 26 probabilities.  Every row is
    renormalized to sum 1; rows off by more than `tol` additionally
    raise a warning.  Negative or all-zero rows are errors.
    """
    dists: list[tuple[np.ndarray, str]] = []
    with open(path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 1 + N_LETTERS:
                raise ValueError(f"{path}:{rowno}: expected letter + 26 values")
            letter = row[0].strip().lower()
            if letter not in LETTERS:
                raise ValueError(f"{path}:{rowno}: bad letter {row[0]!r}")
            try:
                probs = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{rowno}: non-numeric probability")
            total = probs.sum()
            if np.any(probs < 0) or total <= 0:
                raise ValueError(f"{path}:{rowno}: invalid probability row")
            if abs(total - 1.0) > tol:
                warnings.warn(f"{path}:{rowno}: row sums to {total:.6f}, renormalized")
            dists.append((probs / total, letter))
    return aggregate(dists)
