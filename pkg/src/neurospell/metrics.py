"""Evaluation metrics: CER, WER, BLEU-1..4, ROUGE-1/2/L/Lsum, top-k accuracy.

CER/WER are unit-cost Levenshtein distance normalized by reference
length (so both may exceed 100%).  BLEU is corpus-level with uniform
weights, modified n-gram precision, brevity penalty, and add-1
smoothing of the n >= 2 counts (needed because single-sentence decodes
often have no 4-gram matches).  ROUGE is reported as F1.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import LETTERS


def levenshtein(ref: list | str, hyp: list | str) -> int:
    """Unit-cost edit distance via the standard two-row DP."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, rc in enumerate(ref, start=1):
        curr = [i]
        for j, hc in enumerate(hyp, start=1):
            curr.append(min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + (rc != hc)))
        prev = curr
    return prev[-1]


def cer(ref: str, hyp: str) -> float:
    if not ref:
        raise ValueError("empty reference")
    return levenshtein(ref, hyp) / len(ref)


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def wer(ref: str, hyp: str) -> float:
    ref_tokens = _tokens(ref)
    if not ref_tokens:
        raise ValueError("reference has no tokens")
    return levenshtein(ref_tokens, _tokens(hyp)) / len(ref_tokens)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(refs: list[str], hyps: list[str], max_n: int = 4) -> float:
    """Corpus BLEU as a percentage; uniform weights over orders 1..max_n."""
    if len(refs) != len(hyps):
        raise ValueError("refs and hyps must have equal length")
    if not hyps:
        raise ValueError("empty hypothesis list")
    matches = [0] * max_n
    totals = [0] * max_n
    ref_len = hyp_len = 0
    for ref, hyp in zip(refs, hyps):
        rt, ht = _tokens(ref), _tokens(hyp)
        ref_len += len(rt)
        hyp_len += len(ht)
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(ht, n)
            ref_counts = _ngrams(rt, n)
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            totals[n - 1] += max(0, len(ht) - n + 1)
    log_precisions = []
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if n >= 2:  # add-1 smoothing keeps zero-match orders finite
            m, t = m + 1, t + 1
        if t == 0 or m == 0:
            return 0.0
        log_precisions.append(math.log(m / t))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / max(1, hyp_len))
    return 100.0 * bp * math.exp(sum(log_precisions) / max_n)


def _lcs_table(a: list[str], b: list[str]) -> list[list[int]]:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table


def _lcs_len(a: list[str], b: list[str]) -> int:
    return _lcs_table(a, b)[-1][-1]


def _lcs_match_indices(a: list[str], b: list[str]) -> set[int]:
    """Indices of `a` participating in one LCS with `b` (for union LCS)."""
    table = _lcs_table(a, b)
    out: set[int] = set()
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1] and table[i][j] == table[i - 1][j - 1] + 1:
            out.add(i - 1)
            i, j = i - 1, j - 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return out


def _f1(hits: int, n_hyp: int, n_ref: int) -> float:
    if hits == 0 or n_hyp == 0 or n_ref == 0:
        return 0.0
    p, r = hits / n_hyp, hits / n_ref
    return 100.0 * 2 * p * r / (p + r)


def rouge(ref: str, hyp: str) -> dict[str, float]:
    """ROUGE-1/2/L/Lsum F1 percentages.

    Lsum splits on newlines and takes the per-reference-sentence union
    of LCS matches; single-line inputs give rLsum == rL.
    """
    rt, ht = _tokens(ref), _tokens(hyp)
    scores: dict[str, float] = {}
    for key, n in (("r1", 1), ("r2", 2)):
        rc, hc = _ngrams(rt, n), _ngrams(ht, n)
        hits = sum(min(c, rc[g]) for g, c in hc.items())
        scores[key] = _f1(hits, max(0, len(ht) - n + 1), max(0, len(rt) - n + 1))
    scores["rL"] = _f1(_lcs_len(rt, ht), len(ht), len(rt))

    ref_sents = [_tokens(s) for s in ref.split("\n") if s.strip()]
    hyp_sents = [_tokens(s) for s in hyp.split("\n") if s.strip()]
    hits = 0
    for rs in ref_sents:
        union: set[int] = set()
        for hs in hyp_sents:
            union |= _lcs_match_indices(rs, hs)
        hits += len(union)
    scores["rLsum"] = _f1(hits, sum(len(h) for h in hyp_sents), sum(len(r) for r in ref_sents))
    return scores


def topk_accuracy(dists: list[tuple[np.ndarray, str]], k: int) -> float:
    """Percentage of samples whose true letter is in the k most probable.

    Ties are broken by alphabet order (stable sort on descending p).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for probs, letter in dists:
        probs = np.asarray(probs)
        top = np.argsort(-probs, kind="stable")[:k]
        hits += LETTERS.index(letter) in top
    return 100.0 * hits / max(1, len(dists))


CORPUS_METRICS = ("cer", "wer", "bleu1", "bleu2", "bleu3", "bleu4", "r1", "r2", "rL", "rLsum")


@dataclass
class MetricReport:
    per_sentence: list[dict] = field(default_factory=list)
    corpus: dict = field(default_factory=dict)

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump({"per_sentence": self.per_sentence, "corpus": self.corpus}, fh, indent=1)

    def to_csv(self, path: str) -> None:
        cols = ["index", "cer", "wer", "r1", "r2", "rL", "rLsum"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.per_sentence:
                writer.writerow([row["index"]] + [f"{row[c]:.6f}" for c in cols[1:]])
            writer.writerow(
                ["corpus"] + [f"{self.corpus[c]:.6f}" for c in cols[1:]]
            )
            writer.writerow([])
            writer.writerow(["metric", "value"])
            for key in CORPUS_METRICS:
                writer.writerow([key, f"{self.corpus[key]:.6f}"])


def evaluate_pairs(refs: list[str], hyps: list[str]) -> MetricReport:
    """Full metric suite over aligned (reference, hypothesis) pairs."""
    if len(refs) != len(hyps):
        raise ValueError("refs and hyps must have equal length")
    report = MetricReport()
    cer_sum = wer_sum = 0.0
    rouge_sums = {"r1": 0.0, "r2": 0.0, "rL": 0.0, "rLsum": 0.0}
    for i, (ref, hyp) in enumerate(zip(refs, hyps)):
        row = {"index": i, "cer": 100.0 * cer(ref, hyp), "wer": 100.0 * wer(ref, hyp)}
        row.update(rouge(ref, hyp))
        report.per_sentence.append(row)
        cer_sum += row["cer"]
        wer_sum += row["wer"]
        for key in rouge_sums:
            rouge_sums[key] += row[key]
    n = len(refs)
    report.corpus = {
        "cer": cer_sum / n,
        "wer": wer_sum / n,
        "sentences": n,
        "ref_chars": sum(len(r) for r in refs),
        "ref_tokens": sum(len(_tokens(r)) for r in refs),
    }
    for key, total in rouge_sums.items():
        report.corpus[key] = total / n
    for n_order in range(1, 5):
        report.corpus[f"bleu{n_order}"] = bleu(refs, hyps, max_n=n_order)
    return report
