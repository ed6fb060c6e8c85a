"""Neural letter classifier: EEG encoder, trajectory encoder, and losses.

The EEG branch is a two-layer CNN over the [channels x freq bins] PSD
image, projected to a shared embedding; the trajectory branch is a small
CNN over the 28x28 raster trained from scratch.  Training minimizes

    loss_total = 0.35 * loss_CE + 0.65 * loss_CL,
    loss_CL    = 1 - cos(e_eeg, e_traj)^2   (matched pairs),
    loss_CE    = -sum_c y_c log p_c,

with mini-batch SGD.  In training the alignment term also repels
embeddings of different letters (see cl_loss_batch); without negatives
the matched term alone has a degenerate rank-1 optimum.  Trajectories
are a training-only alignment signal; inference uses the EEG branch
alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import LETTERS

CE_WEIGHT = 0.35
CL_WEIGHT = 0.65
CE_EPS = 1e-12  # clamp for log(0)


@dataclass
class Stage1Config:
    n_channels: int = 32
    n_bins: int = 277
    embed_dim: int = 64
    conv_channels: tuple[int, int] = (8, 16)
    lr: float = 0.2
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 50
    use_cl: bool = True
    cl_sign_sensitive: bool = False  # optional 1 - cos variant, default off
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "n_bins": self.n_bins,
            "embed_dim": self.embed_dim,
            "conv_channels": list(self.conv_channels),
        }


class _ConvEncoder(nn.Module):
    """Two conv layers + pooling + linear projection to the embedding."""

    def __init__(self, height: int, width: int, conv_channels: tuple[int, int], embed_dim: int):
        super().__init__()
        c1, c2 = conv_channels
        self.conv1 = nn.Conv2d(1, c1, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=3, padding=1)
        self.pool = nn.AdaptiveAvgPool2d((4, 4))
        self.proj = nn.Linear(c2 * 16, embed_dim)
        self.height, self.width = height, width

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] != (self.height, self.width):
            raise ValueError(f"expected {(self.height, self.width)} input, got {tuple(x.shape[-2:])}")
        h = F.gelu(self.conv1(x.unsqueeze(1)))
        h = F.avg_pool2d(h, 2) if min(h.shape[-2:]) >= 2 else h
        h = F.gelu(self.conv2(h))
        h = self.pool(h)
        return self.proj(h.flatten(1))


class Stage1Model(nn.Module):
    def __init__(self, config: Stage1Config):
        super().__init__()
        self.config = config
        self.eeg_encoder = _ConvEncoder(
            config.n_channels, config.n_bins, config.conv_channels, config.embed_dim
        )
        self.traj_encoder = _ConvEncoder(28, 28, config.conv_channels, config.embed_dim)
        self.head = nn.Linear(config.embed_dim, 26)

    def embed_eeg(self, features: torch.Tensor) -> torch.Tensor:
        return self.eeg_encoder(features)

    def embed_traj(self, rasters: torch.Tensor) -> torch.Tensor:
        return self.traj_encoder(rasters)

    def logits(self, features: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed_eeg(features))


def cl_loss(
    e_eeg: torch.Tensor, e_traj: torch.Tensor, sign_sensitive: bool = False
) -> torch.Tensor:
    """Contrastive alignment loss, 1 - cos^2 (mean over the batch).

    The squared cosine makes the loss sign-invariant (anti-parallel
    embeddings also score 0); sign_sensitive switches to 1 - cos.
    """
    if e_eeg.dim() == 1:
        e_eeg, e_traj = e_eeg.unsqueeze(0), e_traj.unsqueeze(0)
    norms_a = e_eeg.norm(dim=1)
    norms_b = e_traj.norm(dim=1)
    if torch.any(norms_a == 0) or torch.any(norms_b == 0):
        raise ValueError("cosine undefined for zero-norm embedding")
    cos = (e_eeg * e_traj).sum(dim=1) / (norms_a * norms_b)
    if sign_sensitive:
        return (1.0 - cos).mean()
    return (1.0 - cos**2).mean()


def cl_loss_batch(
    e_eeg: torch.Tensor,
    e_traj: torch.Tensor,
    targets: torch.Tensor,
    sign_sensitive: bool = False,
) -> torch.Tensor:
    """Batch alignment loss with negatives: align matched (EEG, trajectory)
    pairs and repel pairs from different letters.

    The matched term is the per-pair loss of `cl_loss`; the repulsion term
    (mean cos^2 over different-letter pairs) prevents the rank-collapse
    degenerate optimum where every embedding shares one direction and the
    classifier head has nothing to separate.
    """
    norms_a = e_eeg.norm(dim=1)
    norms_b = e_traj.norm(dim=1)
    if torch.any(norms_a == 0) or torch.any(norms_b == 0):
        raise ValueError("cosine undefined for zero-norm embedding")
    en = e_eeg / norms_a.unsqueeze(1)
    tn = e_traj / norms_b.unsqueeze(1)
    cos = en @ tn.T
    diag = cos.diagonal()
    matched = (1.0 - diag).mean() if sign_sensitive else (1.0 - diag**2).mean()
    different = targets.unsqueeze(1) != targets.unsqueeze(0)
    if bool(different.any()):
        return matched + (cos[different] ** 2).mean()
    return matched


def ce_loss(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Cross entropy on probability vectors (natural log, mean over batch)."""
    if probs.dim() == 1:
        probs, targets = probs.unsqueeze(0), targets.reshape(1)
    picked = probs.gather(1, targets.unsqueeze(1)).squeeze(1)
    return -(torch.log(picked.clamp_min(CE_EPS))).mean()


def total_loss(ce: torch.Tensor, cl: torch.Tensor) -> torch.Tensor:
    return CE_WEIGHT * ce + CL_WEIGHT * cl


def predict(model: Stage1Model, features: np.ndarray) -> np.ndarray:
    """Per-letter probability distribution from a flat feature vector."""
    cfg = model.config
    expected = cfg.n_channels * cfg.n_bins
    flat = np.asarray(features, dtype=np.float64).ravel()
    if flat.size != expected:
        raise ValueError(f"feature length {flat.size} != {expected}")
    x = torch.as_tensor(flat, dtype=next(model.parameters()).dtype)
    x = x.reshape(1, cfg.n_channels, cfg.n_bins)
    model.eval()
    with torch.no_grad():
        probs = F.softmax(model.logits(x), dim=1)
    return probs.squeeze(0).double().numpy()


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_top1: list[float] = field(default_factory=list)
    val_top3: list[float] = field(default_factory=list)
    val_top5: list[float] = field(default_factory=list)


def _topk_hits(logits: torch.Tensor, targets: torch.Tensor, k: int) -> int:
    topk = logits.topk(k, dim=1).indices
    return int((topk == targets.unsqueeze(1)).any(dim=1).sum())


def train(
    model: Stage1Model,
    features: np.ndarray,  # [n, channels, bins]
    rasters: np.ndarray,  # [n, 28, 28]
    letters: list[str],
    val_fraction: float = 0.2,
) -> TrainHistory:
    """Mini-batch SGD on the combined loss; bit-reproducible given the seed."""
    cfg = model.config
    n = len(letters)
    if n == 0:
        raise ValueError("empty dataset")
    present = set(letters)
    missing = [c for c in LETTERS if c not in present]
    if missing:
        raise ValueError(f"letters absent from dataset: {', '.join(missing)}")

    torch.manual_seed(cfg.seed)
    torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)

    x = torch.as_tensor(np.asarray(features), dtype=torch.float32)
    r = torch.as_tensor(np.asarray(rasters), dtype=torch.float32)
    y = torch.as_tensor([LETTERS.index(c) for c in letters], dtype=torch.long)

    # stratified-ish split: shuffle once, tail becomes validation
    order = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val_idx, train_idx = order[:n_val], order[n_val:]

    opt = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    history = TrainHistory()
    for _ in range(cfg.epochs):
        model.train()
        perm = rng.permutation(len(train_idx))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(perm), cfg.batch_size):
            idx = train_idx[perm[start : start + cfg.batch_size]]
            xb, rb, yb = x[idx], r[idx], y[idx]
            opt.zero_grad()
            e_eeg = model.embed_eeg(xb)
            probs = F.softmax(model.head(e_eeg), dim=1)
            ce = ce_loss(probs, yb)
            if cfg.use_cl:
                e_traj = model.embed_traj(rb)
                cl = cl_loss_batch(e_eeg, e_traj, yb, sign_sensitive=cfg.cl_sign_sensitive)
                loss = total_loss(ce, cl)
            else:
                loss = ce
            if not torch.isfinite(loss):
                raise RuntimeError("NaN/inf loss; lower the learning rate")
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        history.train_loss.append(epoch_loss / max(1, n_batches))

        model.eval()
        with torch.no_grad():
            logits = model.logits(x[val_idx])
        nv = len(val_idx)
        history.val_top1.append(_topk_hits(logits, y[val_idx], 1) / nv)
        history.val_top3.append(_topk_hits(logits, y[val_idx], 3) / nv)
        history.val_top5.append(_topk_hits(logits, y[val_idx], 5) / nv)
    return history


def collect_distributions(
    model: Stage1Model, features: np.ndarray, letters: list[str]
) -> list[tuple[np.ndarray, str]]:
    """(probability vector, true letter) pairs for channel aggregation."""
    out = []
    for feat, letter in zip(features, letters):
        out.append((predict(model, feat), letter))
    return out


def _batch_loss(model: Stage1Model, batch, mode: str) -> torch.Tensor:
    xb, rb, yb = batch
    e_eeg = model.embed_eeg(xb)
    probs = F.softmax(model.head(e_eeg), dim=1)
    if mode == "ce":
        return ce_loss(probs, yb)
    cl = cl_loss_batch(e_eeg, model.embed_traj(rb), yb)
    if mode == "cl":
        return cl
    return total_loss(ce_loss(probs, yb), cl)


def grad_check(
    model: Stage1Model,
    features: np.ndarray,
    rasters: np.ndarray,
    letters: list[str],
    mode: str = "total",
    h: float = 1e-4,
    max_checks: int = 400,
    seed: int = 0,
) -> float:
    """Analytic gradients vs central finite differences; max relative error.

    Runs in double precision.  For models above max_checks parameters a
    seeded random subset of coordinates is probed.
    """
    n_params = sum(p.numel() for p in model.parameters())
    if n_params > 10_000:
        raise ValueError("grad_check is for models with <= 1e4 parameters")
    model = model.double()
    batch = (
        torch.as_tensor(np.asarray(features), dtype=torch.float64),
        torch.as_tensor(np.asarray(rasters), dtype=torch.float64),
        torch.as_tensor([LETTERS.index(c) for c in letters], dtype=torch.long),
    )
    model.zero_grad()
    loss = _batch_loss(model, batch, mode)
    loss.backward()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in model.parameters():
        if p.grad is None:  # parameter unused by this loss mode
            continue
        flat = p.detach().view(-1)
        grad = p.grad.view(-1)
        idx = np.arange(flat.numel())
        if flat.numel() > max_checks // 4:
            idx = rng.choice(flat.numel(), size=max_checks // 4, replace=False)
        for i in idx:
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + h
                up = float(_batch_loss(model, batch, mode))
                flat[i] = orig - h
                dn = float(_batch_loss(model, batch, mode))
                flat[i] = orig
            fd = (up - dn) / (2 * h)
            g = float(grad[i])
            denom = max(abs(fd), abs(g), 1e-8)
            worst = max(worst, abs(fd - g) / denom)
    return worst
