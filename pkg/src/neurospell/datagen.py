"""Deterministic story-plot corpus generator.

The evaluation corpus is not fetched from anywhere: it is generated
from templated word banks, deterministically from a seed, and a copy is
bundled as package data (data/story_corpus.txt, 1320 sentences).
Sentences are lowercase and stay within the denoiser vocabulary
(letters, space, and . , ' - ?).
"""

from __future__ import annotations

import random
from importlib import resources

HEROES = [
    "wizard", "sailor", "cartographer", "blacksmith", "librarian", "thief",
    "astronomer", "gardener", "alchemist", "detective", "violinist", "baker",
    "engineer", "shepherd", "archivist", "pilot", "monk", "courier",
]
ADJ = [
    "young", "weary", "curious", "stubborn", "quiet", "reckless", "patient",
    "forgotten", "exiled", "clever", "half-blind", "restless",
]
OBJECTS = [
    "map", "compass", "letter", "locket", "manuscript", "key", "telescope",
    "ledger", "lantern", "violin", "blueprint", "amulet",
]
OBJ_ADJ = [
    "hidden", "stolen", "ancient", "broken", "glowing", "coded", "cursed",
    "forbidden", "unfinished", "borrowed",
]
PLACES = [
    "abandoned lighthouse", "flooded archive", "mountain monastery",
    "clockwork city", "drowned valley", "frozen harbor", "endless library",
    "silent observatory", "crumbling fortress", "orbital station",
]
VERBS = [
    "discovers", "repairs", "deciphers", "steals", "guards", "buries",
    "trades", "restores", "forges", "unearths",
]
CLAUSES = [
    "after the storm passes", "before the winter council",
    "while the city sleeps", "when the signal fades",
    "as the tide turns", "once the gates close",
]
CONSEQUENCES = [
    "and nothing is ever the same", "and an old debt comes due",
    "but the price is steeper than expected", "and a rival takes notice",
    "but the truth stays buried", "and the journey begins",
]

_TEMPLATES = [
    "the {adj} {hero} {verb} a {oadj} {obj} in the {place}.",
    "{clause}, the {adj} {hero} {verb} the {oadj} {obj}.",
    "the {hero}'s apprentice {verb} a {oadj} {obj} {clause}.",
    "a {adj} {hero} {verb} the {obj} of the {place} {conseq}.",
    "who will guard the {oadj} {obj} when the {adj} {hero} is gone?",
    "the {hero} {verb} the {obj}, {clause}, {conseq}.",
]


def generate_corpus(n_sentences: int = 1320, seed: int = 20_240) -> list[str]:
    """n unique lowercase sentences, deterministic from the seed."""
    rng = random.Random(seed)
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n_sentences:
        template = rng.choice(_TEMPLATES)
        sentence = template.format(
            adj=rng.choice(ADJ),
            hero=rng.choice(HEROES),
            verb=rng.choice(VERBS),
            oadj=rng.choice(OBJ_ADJ),
            obj=rng.choice(OBJECTS),
            place=rng.choice(PLACES),
            clause=rng.choice(CLAUSES),
            conseq=rng.choice(CONSEQUENCES),
        )
        if sentence not in seen:
            seen.add(sentence)
            out.append(sentence)
    return out


def write_corpus(path: str, n_sentences: int = 1320, seed: int = 20_240) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in generate_corpus(n_sentences, seed):
            fh.write(line + "\n")


def bundled_corpus_path(name: str = "story_corpus.txt") -> str:
    return str(resources.files("neurospell.data").joinpath(name))
