"""Character-level sentence denoiser plus an n-gram noisy-channel baseline.

The trainable model is a small encoder-decoder transformer (2+2 layers,
d=128, 4 heads) over a character vocabulary.  Training teacher-forces
the causal objective  -sum_t log P(y_t | x, y_<t)  on (noisy, clean)
pairs produced by the curriculum builder; decoding is beam search with
length-normalized log-probability.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .channel import ConfusionModel, LETTERS
from .corpus import PUNCTUATION, Corpus
from .curriculum import CurriculumSchedule, build_stage_dataset


class CharTokenizer:
    """26 letters + space + punctuation + PAD/BOS/EOS."""

    PAD, BOS, EOS = 0, 1, 2

    def __init__(self):
        chars = LETTERS + " " + PUNCTUATION
        self.id_of = {c: i + 3 for i, c in enumerate(chars)}
        self.char_of = {i: c for c, i in self.id_of.items()}
        self.vocab_size = 3 + len(chars)

    def encode(self, text: str) -> list[int]:
        try:
            return [self.id_of[c] for c in text]
        except KeyError as exc:
            raise ValueError(f"character outside vocabulary: {exc.args[0]!r}")

    def decode(self, ids: list[int]) -> str:
        return "".join(self.char_of[i] for i in ids if i > self.EOS)


@dataclass
class DenoiserConfig:
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
    seed: int = 0
    freeze_corruption: bool = False  # one corruption per stage instead of per epoch

    def arch_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers,
            "ff_dim": self.ff_dim,
            "max_len": self.max_len,
        }


class Seq2SeqModel(nn.Module):
    """Bi-directional encoder, strictly causal decoder with cross-attention."""

    def __init__(self, config: DenoiserConfig, tokenizer: CharTokenizer | None = None):
        super().__init__()
        self.config = config
        self.tokenizer = tokenizer or CharTokenizer()
        v, d = self.tokenizer.vocab_size, config.d_model
        self.embed = nn.Embedding(v, d, padding_idx=CharTokenizer.PAD)
        self.pos = nn.Embedding(config.max_len, d)
        enc_layer = nn.TransformerEncoderLayer(
            d, config.n_heads, config.ff_dim, dropout=0.0, batch_first=True
        )
        dec_layer = nn.TransformerDecoderLayer(
            d, config.n_heads, config.ff_dim, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(
            enc_layer, config.enc_layers, enable_nested_tensor=False
        )
        self.decoder = nn.TransformerDecoder(dec_layer, config.dec_layers)
        self.out = nn.Linear(d, v)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        return self.embed(ids) + self.pos(pos)[None, :, :]

    def encode(self, src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        pad = src == CharTokenizer.PAD
        memory = self.encoder(self._embed(src), src_key_padding_mask=pad)
        return memory, pad

    def decode_logits(
        self, tgt_in: torch.Tensor, memory: torch.Tensor, memory_pad: torch.Tensor
    ) -> torch.Tensor:
        t = tgt_in.shape[1]
        causal = torch.triu(
            torch.ones((t, t), dtype=torch.bool, device=tgt_in.device), diagonal=1
        )
        h = self.decoder(
            self._embed(tgt_in),
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_in == CharTokenizer.PAD,
            memory_key_padding_mask=memory_pad,
        )
        return self.out(h)


def _pad_batch(seqs: list[list[int]], device=None) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), CharTokenizer.PAD, dtype=torch.long, device=device)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(s, dtype=torch.long)
    return out


def sft_loss_per_position(
    model: Seq2SeqModel, src: torch.Tensor, tgt: torch.Tensor
) -> torch.Tensor:
    """Per-position -log P(y_t | x, y_<t); PAD positions contribute 0.

    tgt holds the full target sequence ending in EOS (no BOS); the
    decoder input is BOS + tgt shifted right.
    """
    cfg = model.config
    if src.shape[1] > cfg.max_len or tgt.shape[1] + 1 > cfg.max_len:
        raise ValueError(f"sequence exceeds max length {cfg.max_len}")
    bos = torch.full((tgt.shape[0], 1), CharTokenizer.BOS, dtype=torch.long, device=tgt.device)
    tgt_in = torch.cat([bos, tgt[:, :-1]], dim=1)
    memory, memory_pad = model.encode(src)
    logits = model.decode_logits(tgt_in, memory, memory_pad)
    logprobs = F.log_softmax(logits, dim=-1)
    picked = logprobs.gather(2, tgt.unsqueeze(2)).squeeze(2)
    mask = (tgt != CharTokenizer.PAD).float()
    return -picked * mask


def sft_loss(model: Seq2SeqModel, src: torch.Tensor, tgt: torch.Tensor) -> torch.Tensor:
    """Teacher-forced cross entropy, mean over non-PAD target tokens."""
    per_pos = sft_loss_per_position(model, src, tgt)
    n_tokens = (tgt != CharTokenizer.PAD).sum().clamp_min(1)
    return per_pos.sum() / n_tokens


@dataclass
class StageHistory:
    stage_id: int
    complexity: float
    epoch_loss: list[float] = field(default_factory=list)


def _encode_pairs(
    tok: CharTokenizer, pairs: list[tuple[str, str]], max_len: int
) -> list[tuple[list[int], list[int]]]:
    out = []
    for noisy, target in pairs:
        src = tok.encode(noisy)[: max_len]
        tgt = (tok.encode(target) + [CharTokenizer.EOS])[: max_len - 1]
        out.append((src, tgt))
    return out


def train_curriculum(
    model: Seq2SeqModel,
    schedule: CurriculumSchedule,
    corpus: Corpus,
    seed: int = 0,
) -> list[StageHistory]:
    """Train stage by stage in order of increasing complexity.

    Corruption is redrawn fresh each epoch unless freeze_corruption is
    set.  A no-curriculum baseline is just a single-stage schedule at
    c_max with the same total epoch budget.
    """
    cfg = model.config
    tok = model.tokenizer
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    rng = np.random.default_rng(seed)

    total_steps = 0
    n_train = len(corpus.channel_subset("train"))
    batches_per_epoch = math.ceil(n_train / cfg.batch_size)
    total_steps = schedule.total_epochs * batches_per_epoch

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    def lr_scale(step: int) -> float:
        if step < cfg.warmup_steps:
            return (step + 1) / cfg.warmup_steps
        span = max(1, total_steps - cfg.warmup_steps)
        return 0.5 * (1 + math.cos(math.pi * (step - cfg.warmup_steps) / span))

    sched = torch.optim.lr_scheduler.LambdaLR(opt, lr_scale)
    histories: list[StageHistory] = []
    for stage in schedule.stages:
        hist = StageHistory(stage_id=stage.stage_id, complexity=stage.complexity)
        frozen = None
        if cfg.freeze_corruption:
            frozen = build_stage_dataset(corpus, schedule, stage.stage_id, seed=seed)
        for ep in range(stage.epochs):
            pairs = frozen
            if pairs is None:
                pairs = build_stage_dataset(
                    corpus, schedule, stage.stage_id, seed=seed * 10_007 + ep
                )
            encoded = _encode_pairs(tok, pairs, cfg.max_len)
            order = rng.permutation(len(encoded))
            model.train()
            epoch_loss, n_batches = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                batch = [encoded[i] for i in order[start : start + cfg.batch_size]]
                src = _pad_batch([b[0] for b in batch])
                tgt = _pad_batch([b[1] for b in batch])
                opt.zero_grad()
                loss = sft_loss(model, src, tgt)
                if not torch.isfinite(loss):
                    raise RuntimeError(f"divergence (NaN loss) in stage {stage.stage_id}")
                loss.backward()
                opt.step()
                sched.step()
                epoch_loss += float(loss.detach())
                n_batches += 1
            hist.epoch_loss.append(epoch_loss / max(1, n_batches))
        histories.append(hist)
    return histories


def decode(model: Seq2SeqModel, noisy: str, beam: int | None = None) -> str:
    """Beam search with length-normalized log-probability; beam=1 is greedy."""
    cfg = model.config
    width = beam if beam is not None else cfg.beam
    tok = model.tokenizer
    src_ids = tok.encode(noisy)[: cfg.max_len]
    model.eval()
    with torch.no_grad():
        src = torch.as_tensor([src_ids], dtype=torch.long)
        memory, memory_pad = model.encode(src)
        max_gen = min(cfg.max_len - 1, 2 * max(1, len(src_ids)) + 10)
        # beams: (token ids, total logprob, finished)
        beams: list[tuple[list[int], float, bool]] = [([CharTokenizer.BOS], 0.0, False)]
        for _ in range(max_gen):
            live = [b for b in beams if not b[2]]
            if not live:
                break
            candidates = [b for b in beams if b[2]]
            tgt_in = torch.as_tensor([ids for ids, _, _ in live], dtype=torch.long)
            logits = model.decode_logits(
                tgt_in, memory.expand(len(live), -1, -1), memory_pad.expand(len(live), -1)
            )
            logprobs = F.log_softmax(logits[:, -1], dim=-1)
            # PAD/BOS are never valid generations
            logprobs[:, CharTokenizer.PAD] = float("-inf")
            logprobs[:, CharTokenizer.BOS] = float("-inf")
            top = torch.topk(logprobs, width, dim=-1)
            for (ids, score, _), lps, tids in zip(live, top.values.tolist(), top.indices.tolist()):
                for lp, tid in zip(lps, tids):
                    candidates.append((ids + [tid], score + lp, tid == CharTokenizer.EOS))
            # length-normalized score; ties broken by token ids for determinism
            candidates.sort(key=lambda c: (-c[1] / (len(c[0]) - 1), c[0]))
            beams = candidates[:width]
        best = beams[0][0]
    return tok.decode(best)


def sequence_logprob(model: Seq2SeqModel, noisy: str, output: str) -> float:
    """Total log-probability of an output string (incl. EOS) given input."""
    tok = model.tokenizer
    src = _pad_batch([tok.encode(noisy)])
    tgt = _pad_batch([tok.encode(output) + [CharTokenizer.EOS]])
    model.eval()
    with torch.no_grad():
        per_pos = sft_loss_per_position(model, src, tgt)
    return -float(per_pos.sum())


def grad_check(
    model: Seq2SeqModel,
    pairs: list[tuple[str, str]],
    h: float = 1e-4,
    max_checks: int = 400,
    seed: int = 0,
) -> float:
    """SFT-loss analytic gradients vs central finite differences.

    Runs in double precision; max relative error over a seeded subset of
    parameter coordinates.  Restricted to models with <= 1e4 parameters.
    """
    n_params = sum(p.numel() for p in model.parameters())
    if n_params > 10_000:
        raise ValueError("grad_check is for models with <= 1e4 parameters")
    model = model.double()
    tok = model.tokenizer
    src = _pad_batch([tok.encode(n)[: model.config.max_len] for n, _ in pairs])
    tgt = _pad_batch(
        [(tok.encode(t) + [CharTokenizer.EOS])[: model.config.max_len - 1] for _, t in pairs]
    )
    model.zero_grad()
    sft_loss(model, src, tgt).backward()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in model.parameters():
        if p.grad is None:
            continue
        flat = p.detach().view(-1)
        grad = p.grad.view(-1)
        idx = np.arange(flat.numel())
        if flat.numel() > max_checks // 8:
            idx = rng.choice(flat.numel(), size=max_checks // 8, replace=False)
        for i in idx:
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + h
                up = float(sft_loss(model, src, tgt))
                flat[i] = orig - h
                dn = float(sft_loss(model, src, tgt))
                flat[i] = orig
            fd = (up - dn) / (2 * h)
            g = float(grad[i])
            denom = max(abs(fd), abs(g), 1e-8)
            worst = max(worst, abs(fd - g) / denom)
    return worst


class Lexicon:
    """Word unigram/bigram counts from a training corpus, for the baseline."""

    def __init__(self, sentences: list[str]):
        if not any(s.strip() for s in sentences):
            raise ValueError("empty lexicon corpus")
        self.unigrams: Counter = Counter()
        self.bigrams: Counter = Counter()
        for s in sentences:
            words = s.split()
            self.unigrams.update(words)
            self.bigrams.update(zip(words, words[1:]))
        self.total = sum(self.unigrams.values())
        self.by_length: dict[int, list[str]] = {}
        for w in sorted(self.unigrams):
            self.by_length.setdefault(len(w), []).append(w)

    def log_p_word(self, word: str) -> float:
        return math.log((self.unigrams.get(word, 0) + 1) / (self.total + len(self.unigrams) + 1))

    def log_p_transition(self, prev: str, word: str) -> float:
        v = len(self.unigrams) + 1
        num = self.bigrams.get((prev, word), 0) + 1
        den = self.unigrams.get(prev, 0) + v
        return math.log(num / den)


_CHANNEL_FLOOR = 1e-12


def ngram_decode(
    noisy: str, lexicon: Lexicon, channel: ConfusionModel
) -> str:
    """Bigram Viterbi over equal-length lexicon candidates per word.

    Word score combines the channel likelihood of the observed letters
    given the candidate and smoothed word-transition probabilities.
    Words with no equal-length lexicon entry pass through unchanged.
    """
    sampling = channel.sampling_or_agg
    observed_words = noisy.split()
    if not observed_words:
        return noisy

    def emission(candidate: str, observed: str) -> float:
        total = 0.0
        for c, o in zip(candidate, observed):
            ci, oi = LETTERS.find(c), LETTERS.find(o)
            if ci < 0 or oi < 0:
                return -math.inf
            total += math.log(max(sampling[ci, oi], _CHANNEL_FLOOR))
        return total

    candidate_sets: list[list[tuple[str, float]]] = []
    for obs in observed_words:
        cands = lexicon.by_length.get(len(obs), [])
        scored = [(c, emission(c, obs)) for c in cands]
        scored = [(c, s) for c, s in scored if s > -math.inf]
        if not scored:
            scored = [(obs, 0.0)]  # passthrough fallback
        candidate_sets.append(scored)

    # Viterbi over word positions
    prev_scores: dict[str, float] = {
        c: lexicon.log_p_word(c) + e for c, e in candidate_sets[0]
    }
    backptr: list[dict[str, str]] = []
    for pos in range(1, len(candidate_sets)):
        scores: dict[str, float] = {}
        back: dict[str, str] = {}
        for c, e in candidate_sets[pos]:
            best_prev, best = None, -math.inf
            for p, ps in prev_scores.items():
                s = ps + lexicon.log_p_transition(p, c)
                if s > best:
                    best_prev, best = p, s
            scores[c] = best + e
            back[c] = best_prev
        prev_scores = scores
        backptr.append(back)

    last = max(sorted(prev_scores), key=lambda c: prev_scores[c])
    words = [last]
    for back in reversed(backptr):
        words.append(back[words[-1]])
    return " ".join(reversed(words))
