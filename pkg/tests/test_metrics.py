import csv
import json
import math
import os
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurospell.metrics import (
    MetricReport,
    bleu,
    cer,
    evaluate_pairs,
    levenshtein,
    rouge,
    topk_accuracy,
    wer,
)

from oracles import bleu_oracle, edit_distance_matrix, fixture_pairs, rouge_oracle

GOLDENS = os.path.join(os.path.dirname(__file__), "data", "metric_goldens.json")


class TestLevenshtein:
    def test_known_values(self):
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein("abc", "abc") == 0
        assert levenshtein("", "abc") == 3
        assert levenshtein("abc", "") == 3

    def test_matches_matrix_oracle_random(self):
        gen = random.Random(99)
        for _ in range(300):
            a = "".join(gen.choice("abcde ") for _ in range(gen.randint(0, 15)))
            b = "".join(gen.choice("abcde ") for _ in range(gen.randint(0, 15)))
            assert levenshtein(a, b) == edit_distance_matrix(a, b), (a, b)

    @given(st.text(max_size=20), st.text(max_size=20), st.text(max_size=20))
    def test_triangle_inequality(self, a, b, c):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    @given(st.text(max_size=30), st.text(max_size=30))
    def test_symmetry_and_bounds(self, a, b):
        d = levenshtein(a, b)
        assert d == levenshtein(b, a)
        assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


class TestCerWer:
    def test_cer_basics(self):
        assert cer("abc", "abc") == 0.0
        assert cer("abc", "abd") == pytest.approx(1 / 3)
        assert cer("ab", "") == 1.0
        assert cer("ab", "abcdef") == 2.0  # can exceed 100%

    def test_wer_basics(self):
        assert wer("the cat sat", "the cat sat") == 0.0
        assert wer("the cat sat", "the dog sat") == pytest.approx(1 / 3)
        assert wer("one", "one two three") == 2.0

    def test_wer_case_insensitive(self):
        assert wer("The Cat", "the cat") == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            cer("", "x")
        with pytest.raises(ValueError):
            wer("   ", "x")


class TestBleu:
    def test_identical_is_100(self):
        refs = ["the quick brown fox jumps over the lazy dog"]
        assert bleu(refs, refs) == pytest.approx(100.0)

    def test_disjoint_near_zero(self):
        score = bleu(["aa bb cc dd ee"], ["xx yy zz ww vv"])
        assert score < 5.0  # only smoothing mass remains

    def test_brevity_penalty(self):
        ref = ["one two three four five six"]
        short = bleu(ref, ["one two three"])
        full = bleu(ref, ["one two three four five six"])
        assert short < full

    def test_matches_oracle_on_random(self):
        gen = random.Random(5)
        vocab = "alpha beta gamma delta epsilon".split()
        refs = [" ".join(gen.choice(vocab) for _ in range(gen.randint(1, 8))) for _ in range(30)]
        hyps = [" ".join(gen.choice(vocab) for _ in range(gen.randint(1, 8))) for _ in range(30)]
        for n in range(1, 5):
            assert bleu(refs, hyps, max_n=n) == pytest.approx(
                bleu_oracle(refs, hyps, max_n=n), abs=1e-9
            )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            bleu(["a"], ["a", "b"])


class TestRouge:
    def test_identical_is_100(self):
        s = "the quick brown fox"
        out = rouge(s, s)
        assert all(v == pytest.approx(100.0) for v in out.values())

    def test_disjoint_is_zero(self):
        out = rouge("aa bb", "cc dd")
        assert all(v == 0.0 for v in out.values())

    def test_matches_oracle_on_random(self):
        gen = random.Random(17)
        vocab = "red green blue dog cat runs sits".split()
        for _ in range(50):
            ref = " ".join(gen.choice(vocab) for _ in range(gen.randint(1, 8)))
            hyp = " ".join(gen.choice(vocab) for _ in range(gen.randint(1, 8)))
            ours = rouge(ref, hyp)
            oracle = rouge_oracle(ref, hyp)
            for key in ("r1", "r2", "rL"):
                assert ours[key] == pytest.approx(oracle[key], abs=1e-9), (ref, hyp, key)

    def test_lsum_multiline_hand_computed(self):
        # ref sentence 1 "a b c" matches hyp line "a b x" on {a, b}; ref
        # sentence 2 "d e" matches hyp line "d y" on {d}: union hits = 3,
        # n_ref = 5, n_hyp = 5 -> F1 = 60%
        ref = "a b c\nd e"
        hyp = "a b x\nd y"
        out = rouge(ref, hyp)
        assert out["rLsum"] == pytest.approx(60.0)

    def test_lsum_equals_l_single_line(self):
        out = rouge("one two three four", "one three two four")
        assert out["rLsum"] == pytest.approx(out["rL"])


class TestGoldens:
    def test_frozen_fixture_goldens(self):
        with open(GOLDENS) as fh:
            goldens = json.load(fh)
        pairs = fixture_pairs()
        assert [list(p) for p in pairs] == goldens["pairs"]
        refs = [r for r, _ in pairs]
        hyps = [h for _, h in pairs]
        for n in range(1, 5):
            assert bleu(refs, hyps, max_n=n) == pytest.approx(
                goldens["bleu"][f"bleu{n}"], abs=0.1
            )
        for (ref, hyp), expected in zip(pairs, goldens["rouge"]):
            ours = rouge(ref, hyp)
            for key, val in expected.items():
                assert ours[key] == pytest.approx(val, abs=0.1), (ref, hyp, key)


class TestTopkAccuracy:
    def test_basic(self):
        p = np.zeros(26)
        p[3] = 1.0  # 'd'
        assert topk_accuracy([(p, "d")], 1) == 100.0
        assert topk_accuracy([(p, "e")], 1) == 0.0

    def test_k_grows_hits(self):
        gen = np.random.default_rng(2)
        dists = []
        for _ in range(50):
            p = gen.random(26)
            dists.append((p / p.sum(), "m"))
        accs = [topk_accuracy(dists, k) for k in (1, 5, 10, 26)]
        assert accs == sorted(accs)
        assert accs[-1] == 100.0

    def test_tie_break_alphabetical(self):
        p = np.full(26, 1 / 26)  # all tied: top-1 is 'a'
        assert topk_accuracy([(p, "a")], 1) == 100.0
        assert topk_accuracy([(p, "b")], 1) == 0.0

    def test_bad_k(self):
        with pytest.raises(ValueError):
            topk_accuracy([], 0)


class TestEvaluatePairs:
    def test_report_shape(self):
        refs = ["the cat sat", "dogs run fast"]
        hyps = ["the cat sat", "dogs walk fast"]
        report = evaluate_pairs(refs, hyps)
        assert len(report.per_sentence) == 2
        assert report.corpus["sentences"] == 2
        assert report.corpus["cer"] == pytest.approx(
            (report.per_sentence[0]["cer"] + report.per_sentence[1]["cer"]) / 2
        )
        for key in ("bleu1", "bleu2", "bleu3", "bleu4", "r1", "r2", "rL", "rLsum"):
            assert key in report.corpus

    def test_csv_and_json_outputs(self, tmp_path):
        report = evaluate_pairs(["a b c"], ["a b d"])
        jpath = str(tmp_path / "m.json")
        cpath = str(tmp_path / "m.csv")
        report.to_json(jpath)
        report.to_csv(cpath)
        with open(jpath) as fh:
            data = json.load(fh)
        assert data["corpus"]["cer"] == pytest.approx(report.corpus["cer"])
        with open(cpath) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "index"
        assert rows[2][0] == "corpus"
        assert ["metric", "value"] in rows

    def test_perfect_decode_all_scores(self):
        refs = ["hello world", "good day"]
        report = evaluate_pairs(refs, list(refs))
        assert report.corpus["cer"] == 0.0
        assert report.corpus["wer"] == 0.0
        assert report.corpus["bleu4"] == pytest.approx(100.0)
        assert report.corpus["rL"] == pytest.approx(100.0)
