import math

import numpy as np
import pytest
import torch

from neurospell.corpus import LETTERS
from neurospell.stage1 import (
    CE_WEIGHT,
    CL_WEIGHT,
    Stage1Config,
    Stage1Model,
    ce_loss,
    cl_loss,
    cl_loss_batch,
    collect_distributions,
    grad_check,
    predict,
    total_loss,
    train,
)


def _tiny_config(**kw):
    defaults = dict(n_channels=4, n_bins=16, embed_dim=8, conv_channels=(2, 3), seed=0)
    defaults.update(kw)
    return Stage1Config(**defaults)


def _tiny_dataset(n_per_letter=1, seed=0):
    gen = np.random.default_rng(seed)
    feats, rasters, letters = [], [], []
    for c in LETTERS:
        for _ in range(n_per_letter):
            feats.append(gen.standard_normal((4, 16)))
            rasters.append(gen.random((28, 28)))
            letters.append(c)
    return np.stack(feats), np.stack(rasters), letters


class TestClLoss:
    def test_parallel_orthogonal_antiparallel(self):
        e = torch.tensor([1.0, 0.0])
        assert float(cl_loss(e, e)) == pytest.approx(0.0, abs=1e-12)
        assert float(cl_loss(e, torch.tensor([0.0, 1.0]))) == pytest.approx(1.0, abs=1e-12)
        assert float(cl_loss(e, -e)) == pytest.approx(0.0, abs=1e-12)

    def test_sign_sensitive_variant(self):
        e = torch.tensor([1.0, 0.0])
        assert float(cl_loss(e, -e, sign_sensitive=True)) == pytest.approx(2.0, abs=1e-12)
        assert float(cl_loss(e, e, sign_sensitive=True)) == pytest.approx(0.0, abs=1e-12)

    def test_scale_invariant(self):
        a = torch.tensor([[0.3, -0.7, 0.2]])
        b = torch.tensor([[0.1, 0.5, -0.4]])
        assert float(cl_loss(a, b)) == pytest.approx(float(cl_loss(5 * a, 0.1 * b)), abs=1e-6)

    def test_batch_mean(self):
        a = torch.tensor([[1.0, 0.0], [1.0, 0.0]])
        b = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        assert float(cl_loss(a, b)) == pytest.approx(0.5, abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            cl_loss(torch.zeros(3), torch.ones(3))


class TestClLossBatch:
    def test_same_labels_match_pairwise_loss(self):
        # no different-letter pairs: reduces to the matched-pair loss
        a = torch.tensor([[1.0, 0.0], [1.0, 0.0]])
        b = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        y = torch.tensor([0, 0])
        assert float(cl_loss_batch(a, b, y)) == pytest.approx(float(cl_loss(a, b)), abs=1e-12)

    def test_orthogonal_negatives_add_nothing(self):
        a = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        y = torch.tensor([0, 1])
        assert float(cl_loss_batch(a, a, y)) == pytest.approx(0.0, abs=1e-12)

    def test_aligned_negatives_penalized(self):
        # matched pairs perfect, but the two letters share a direction
        a = torch.tensor([[1.0, 0.0], [1.0, 0.0]])
        y = torch.tensor([0, 1])
        # both cross terms have cos^2 = 1 -> repulsion term is 1
        assert float(cl_loss_batch(a, a, y)) == pytest.approx(1.0, abs=1e-12)

    def test_sign_sensitive_matched_term(self):
        a = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        y = torch.tensor([0, 1])
        assert float(cl_loss_batch(a, -a, y, sign_sensitive=True)) == pytest.approx(
            2.0, abs=1e-12
        )

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            cl_loss_batch(torch.zeros((1, 3)), torch.ones((1, 3)), torch.tensor([0]))


class TestCeLoss:
    def test_uniform_is_log26(self):
        probs = torch.full((1, 26), 1 / 26, dtype=torch.float64)
        assert float(ce_loss(probs, torch.tensor([4]))) == pytest.approx(
            math.log(26), abs=1e-9
        )

    def test_confident_correct_near_zero(self):
        probs = torch.full((1, 26), 1e-9)
        probs[0, 7] = 1.0
        assert float(ce_loss(probs, torch.tensor([7]))) == pytest.approx(0.0, abs=1e-6)

    def test_zero_probability_clamped_finite(self):
        probs = torch.zeros((1, 26))
        probs[0, 0] = 1.0
        val = float(ce_loss(probs, torch.tensor([5])))
        assert math.isfinite(val) and val > 20  # -log(1e-12)


class TestTotalLoss:
    def test_weights(self):
        ce = torch.tensor(2.0)
        cl = torch.tensor(1.0)
        assert float(total_loss(ce, cl)) == pytest.approx(CE_WEIGHT * 2.0 + CL_WEIGHT * 1.0)
        assert CE_WEIGHT == 0.35 and CL_WEIGHT == 0.65
        assert CE_WEIGHT + CL_WEIGHT == pytest.approx(1.0)


class TestModel:
    def test_predict_is_distribution(self):
        torch.manual_seed(0)
        model = Stage1Model(_tiny_config())
        p = predict(model, np.zeros(4 * 16))
        assert p.shape == (26,)
        assert p.sum() == pytest.approx(1.0, abs=1e-6)  # float32 softmax
        assert np.all(p >= 0)

    def test_predict_validates_length(self):
        model = Stage1Model(_tiny_config())
        with pytest.raises(ValueError):
            predict(model, np.zeros(10))

    def test_encoder_validates_shape(self):
        model = Stage1Model(_tiny_config())
        with pytest.raises(ValueError):
            model.embed_eeg(torch.zeros(1, 5, 16))

    def test_collect_distributions(self):
        torch.manual_seed(0)
        model = Stage1Model(_tiny_config())
        feats, _, letters = _tiny_dataset()
        dists = collect_distributions(model, feats, letters)
        assert len(dists) == 26
        assert all(d[0].shape == (26,) for d in dists)
        assert [d[1] for d in dists] == letters


class TestTrain:
    def test_deterministic(self):
        feats, rasters, letters = _tiny_dataset(n_per_letter=2)
        histories = []
        for _ in range(2):
            torch.manual_seed(0)
            model = Stage1Model(_tiny_config(epochs=2, lr=0.05))
            histories.append(train(model, feats, rasters, letters))
        assert histories[0].train_loss == histories[1].train_loss
        assert histories[0].val_top1 == histories[1].val_top1

    def test_history_lengths(self):
        feats, rasters, letters = _tiny_dataset(n_per_letter=2)
        torch.manual_seed(0)
        model = Stage1Model(_tiny_config(epochs=3, lr=0.05))
        hist = train(model, feats, rasters, letters)
        assert len(hist.train_loss) == 3
        assert len(hist.val_top1) == len(hist.val_top3) == len(hist.val_top5) == 3
        assert all(0.0 <= v <= 1.0 for v in hist.val_top1)

    def test_missing_letters_rejected(self):
        feats, rasters, letters = _tiny_dataset()
        with pytest.raises(ValueError, match="absent"):
            train(Stage1Model(_tiny_config()), feats[:10], rasters[:10], letters[:10])

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(Stage1Model(_tiny_config()), np.zeros((0, 4, 16)), np.zeros((0, 28, 28)), [])

    def test_no_cl_mode_runs(self):
        feats, rasters, letters = _tiny_dataset(n_per_letter=2)
        torch.manual_seed(0)
        model = Stage1Model(_tiny_config(epochs=1, lr=0.05, use_cl=False))
        hist = train(model, feats, rasters, letters)
        assert len(hist.train_loss) == 1


class TestGradCheck:
    def test_total_loss_gradients(self):
        torch.manual_seed(1)
        model = Stage1Model(_tiny_config())
        feats, rasters, letters = _tiny_dataset()
        err = grad_check(model, feats[:6], rasters[:6], letters[:6], mode="total")
        assert err < 1e-4

    def test_rejects_large_models(self):
        model = Stage1Model(Stage1Config())
        feats, rasters, letters = _tiny_dataset()
        with pytest.raises(ValueError):
            grad_check(model, feats, rasters, letters)
