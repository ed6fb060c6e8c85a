#!/usr/bin/env python3
"""Regenerate the bundled story corpus in src/neurospell/data/.

The file is committed, so this only needs rerunning when the generator
in neurospell.datagen changes; the test suite asserts the committed
file matches the generator output.  sample_corpus.txt is handcrafted
(mixed case, digits, punctuation edge cases) and is not regenerated.
"""

import argparse
import os

from neurospell.datagen import write_corpus

DATA_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "src", "neurospell", "data",
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default=DATA_DIR)
    args = parser.parse_args()
    write_corpus(os.path.join(args.outdir, "story_corpus.txt"), n_sentences=1320, seed=20_240)
    print(f"wrote story_corpus.txt (1320 lines) to {args.outdir}")


if __name__ == "__main__":
    main()
