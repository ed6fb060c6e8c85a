"""Text corpus ingestion, alphabet definition, and normalization.

Everything downstream (the noise channel, the curriculum builder, the
denoiser, the metrics) shares the 26-letter lowercase alphabet defined
here.  Normalization lowercases, drops anything outside a-z, and
collapses whitespace; the denoiser target keeps lowercase letters,
spaces and supported punctuation from the original text.
"""

from __future__ import annotations

import json
import math
import random
import re
import string
from dataclasses import dataclass, field


LETTERS: str = string.ascii_lowercase
SPACE: str = " "
PUNCTUATION: str = ".,'-?"  # kept in denoiser targets, stripped by normalize


@dataclass(frozen=True)
class Alphabet:
    """The 26 lowercase Latin letters, in fixed a..z order."""

    letters: str = LETTERS
    space_symbol: str = SPACE

    def __post_init__(self):
        if len(self.letters) != 26 or self.letters != LETTERS:
            raise ValueError("alphabet must be exactly a..z in order")

    def index_of(self, letter: str) -> int:
        i = self.letters.find(letter)
        if i < 0:
            raise KeyError(f"not in alphabet: {letter!r}")
        return i

    def letter_at(self, index: int) -> str:
        return self.letters[index]

    def __contains__(self, ch: str) -> bool:
        return ch in self.letters

    def __len__(self) -> int:
        return 26


ALPHABET = Alphabet()

_NON_ALPHA = re.compile(r"[^a-z ]+")
_MULTISPACE = re.compile(r" {2,}")


def normalize(text: str) -> str:
    """Lowercase, drop non-letters, collapse runs of whitespace.

    Digits, punctuation and apostrophes are deleted (not transliterated),
    so "people's pasts" becomes "peoples pasts".  Returns "" for input
    with no alphabetic content; callers treat that as a degenerate
    sentence and keep it out of channel runs.
    """
    lowered = text.lower()
    lowered = re.sub(r"\s+", " ", lowered)
    stripped = _NON_ALPHA.sub("", lowered)
    return _MULTISPACE.sub(" ", stripped).strip()


_TARGET_CHARS = set(LETTERS + SPACE + PUNCTUATION)


def target_text(text: str) -> str:
    """Canonical denoiser target: lowercase, restricted to the model vocabulary.

    Letters, spaces and the supported punctuation survive; anything else
    (digits, other symbols) is deleted and whitespace runs collapse.
    """
    lowered = re.sub(r"\s+", " ", text.lower())
    kept = "".join(c for c in lowered if c in _TARGET_CHARS)
    return _MULTISPACE.sub(" ", kept).strip()


@dataclass(frozen=True)
class Sentence:
    """One corpus sentence: original text plus its normalized form."""

    original: str
    normalized: str = field(default="")

    @staticmethod
    def from_text(text: str) -> "Sentence":
        return Sentence(original=text.strip(), normalized=normalize(text))

    @property
    def target(self) -> str:
        """Denoiser target form (lowercase, model vocabulary only)."""
        return target_text(self.original)

    @property
    def degenerate(self) -> bool:
        return self.normalized == ""


SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class Corpus:
    """Sentences plus a deterministic train/val/test partition."""

    sentences: tuple[Sentence, ...]
    split: tuple[str, ...]  # one of SPLIT_NAMES per sentence
    seed: int

    def __post_init__(self):
        if len(self.sentences) != len(self.split):
            raise ValueError("split labels must cover every sentence")

    def subset(self, name: str) -> list[Sentence]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return [s for s, lab in zip(self.sentences, self.split) if lab == name]

    def channel_subset(self, name: str) -> list[Sentence]:
        """Split subset with degenerate (empty-normalized) sentences removed."""
        return [s for s in self.subset(name) if not s.degenerate]


def _split_sizes(n: int, fractions: tuple[float, float, float]) -> list[int]:
    # floor each share, then hand out the remainder by largest fractional part
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    raw = [f * n for f in fractions]
    sizes = [int(math.floor(r)) for r in raw]
    rema = [(r - s, -i) for i, (r, s) in enumerate(zip(raw, sizes))]
    for _, neg_i in sorted(rema, reverse=True)[: n - sum(sizes)]:
        sizes[-neg_i] += 1
    return sizes


def make_corpus(
    texts: list[str],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Corpus:
    """Build a Corpus with a seeded, reproducible partition."""
    sentences = tuple(Sentence.from_text(t) for t in texts)
    n = len(sentences)
    sizes = _split_sizes(n, fractions)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    labels = [""] * n
    cursor = 0
    for name, size in zip(SPLIT_NAMES, sizes):
        for idx in order[cursor : cursor + size]:
            labels[idx] = name
        cursor += size
    return Corpus(sentences=sentences, split=tuple(labels), seed=seed)


def load_corpus(
    path: str,
    format: str = "plain-lines",
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Corpus:
    """Load one-sentence-per-line text or JSON-lines with a "text" field."""
    texts: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if format == "plain-lines":
                texts.append(line)
            elif format == "json-lines":
                try:
                    obj = json.loads(line)
                    texts.append(obj["text"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed JSON line ({exc})")
            else:
                raise ValueError(f"unknown corpus format {format!r}")
    return make_corpus(texts, fractions=fractions, seed=seed)
