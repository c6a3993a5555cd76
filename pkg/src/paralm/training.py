"""Training loops: monolingual pre-training and parallel fine-tuning.

Both phases run the same Adam loop over assembled sequences with linear
learning-rate warmup across the first 5% of steps, length-bucketed batches,
and fully seeded randomness, so a run is reproducible bit for bit from its
configuration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    NoiseConfig, ParallelPair, TrainingSequence,
    assemble_bilingual, assemble_monolingual,
)
from .model import TransformerLM, batch_loss, save_checkpoint
from .optim import AdamConfig, adam_step
from .tensor import backward
from .vocab import Vocabulary


@dataclass
class TrainConfig:
    phase: str
    steps: int
    batch_size: int = 16
    adam: AdamConfig = field(default_factory=AdamConfig)
    noise: NoiseConfig | None = None
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 0
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.phase not in ("pretrain", "finetune"):
            raise ValueError(f"phase must be 'pretrain' or 'finetune', got {self.phase!r}")
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.noise is not None and self.phase != "finetune":
            raise ValueError("corruption noise is only supported in the finetune phase")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")


@dataclass
class TrainReport:
    train_loss: list[tuple[int, float]] = field(default_factory=list)
    heldout_nll: list[tuple[int, float]] = field(default_factory=list)
    wall_clock_per_step: list[float] = field(default_factory=list)
    final_checkpoint: str | None = None


def _scheduled_lr(base: float, step: int, total_steps: int, schedule: str) -> float:
    """Linear warmup over the first 5% of steps, then constant or a cosine
    decay to a 10% floor."""
    warmup = max(1, int(0.05 * total_steps))
    if step + 1 < warmup:
        return base * (step + 1) / warmup
    if schedule == "constant" or total_steps <= warmup:
        return base
    progress = (step + 1 - warmup) / (total_steps - warmup)
    return base * (0.1 + 0.9 * 0.5 * (1.0 + np.cos(np.pi * progress)))


def _length_buckets(n_seqs: int, lengths: list[int], batch_size: int) -> list[list[int]]:
    order = sorted(range(n_seqs), key=lambda i: (lengths[i], i))
    return [order[i : i + batch_size] for i in range(0, n_seqs, batch_size)]


def _train_loop(
    m: TransformerLM,
    cfg: TrainConfig,
    v: Vocabulary,
    batch_for: "callable",
    n_batches: int,
    heldout: Sequence[TrainingSequence] | None,
    checkpoint_path: str | None,
) -> TrainReport:
    report = TrainReport()
    for step in range(cfg.steps):
        epoch = step // n_batches
        slot = step % n_batches
        if slot == 0:
            epoch_rng = np.random.default_rng([cfg.seed, 2, epoch])
            batch_order = epoch_rng.permutation(n_batches)
        seqs = batch_for(int(batch_order[slot]), epoch)
        t0 = time.perf_counter()
        loss = batch_loss(m, seqs, v)
        backward(loss)
        adam_step(m.params, cfg.adam,
                  lr=_scheduled_lr(cfg.adam.learning_rate, step, cfg.steps, cfg.lr_schedule))
        report.wall_clock_per_step.append(time.perf_counter() - t0)
        report.train_loss.append((step, float(loss.data)))
        if cfg.eval_every and heldout and (step + 1) % cfg.eval_every == 0:
            report.heldout_nll.append((step, evaluate_heldout_nll(m, heldout, v)))
        if checkpoint_path and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(m, checkpoint_path)
    if checkpoint_path:
        save_checkpoint(m, checkpoint_path)
        report.final_checkpoint = checkpoint_path
    return report


def pretrain(
    m: TransformerLM,
    mono_corpus: Iterable[tuple[Sequence[str], str]],
    cfg: TrainConfig,
    v: Vocabulary,
    heldout: Sequence[TrainingSequence] | None = None,
    checkpoint_path: str | None = None,
) -> TrainReport:
    """Language-model training on single sentences tagged with their language."""
    if cfg.phase != "pretrain":
        raise ValueError(f"pretrain called with phase {cfg.phase!r}")
    seqs = [assemble_monolingual(tokens, lang, v) for tokens, lang in mono_corpus]
    if not seqs:
        raise ValueError("empty monolingual corpus")
    buckets = _length_buckets(len(seqs), [len(s) for s in seqs], cfg.batch_size)

    def batch_for(bucket_idx: int, epoch: int) -> list[TrainingSequence]:
        return [seqs[i] for i in buckets[bucket_idx]]

    return _train_loop(m, cfg, v, batch_for, len(buckets), heldout, checkpoint_path)


def finetune(
    m: TransformerLM,
    parallel_corpus: Iterable[ParallelPair],
    cfg: TrainConfig,
    v: Vocabulary,
    heldout: Sequence[TrainingSequence] | None = None,
    checkpoint_path: str | None = None,
) -> TrainReport:
    """Train on concatenated translation pairs, optionally with source noise.

    Same-language pairs are rejected: any paraphrasing ability of the
    trained model is then attributable to zero-shot transfer. Corruption is
    re-sampled per epoch from seeds derived from (noise seed, epoch, index).
    """
    if cfg.phase != "finetune":
        raise ValueError(f"finetune called with phase {cfg.phase!r}")
    pairs = list(parallel_corpus)
    if not pairs:
        raise ValueError("empty parallel corpus")
    for p in pairs:
        if p.src_lang == p.tgt_lang:
            raise ValueError(f"same-language pair ({p.src_lang!r}) violates the zero-shot setup")
    lengths = [len(p.src_tokens) + len(p.tgt_tokens) + 5 for p in pairs]
    buckets = _length_buckets(len(pairs), lengths, cfg.batch_size)

    def batch_for(bucket_idx: int, epoch: int) -> list[TrainingSequence]:
        out = []
        for i in buckets[bucket_idx]:
            if cfg.noise is None:
                out.append(assemble_bilingual(pairs[i], None, v))
            else:
                rng = np.random.default_rng([cfg.noise.seed, 3, epoch, i])
                out.append(assemble_bilingual(pairs[i], cfg.noise, v, rng))
        return out

    return _train_loop(m, cfg, v, batch_for, len(buckets), heldout, checkpoint_path)


def evaluate_heldout_nll(
    m: TransformerLM,
    seqs: Sequence[TrainingSequence],
    v: Vocabulary,
    batch_size: int = 16,
) -> float:
    """Mean NLL per scored token, pooled over the corpus; mutates nothing."""
    seqs = list(seqs)
    if not seqs:
        raise ValueError("empty held-out corpus")
    total_nll = 0.0
    total_tokens = 0.0
    order = sorted(range(len(seqs)), key=lambda i: (len(seqs[i]), i))
    for start in range(0, len(order), batch_size):
        chunk = [seqs[i] for i in order[start : start + batch_size]]
        n_masked = float(sum(s.loss_mask[1:].sum() for s in chunk))
        loss = batch_loss(m, chunk, v)
        total_nll += float(loss.data) * n_masked
        total_tokens += n_masked
    return total_nll / total_tokens


def next_token_accuracy(
    m: TransformerLM,
    seqs: Sequence[TrainingSequence],
    v: Vocabulary,
    target_segment_only: bool = True,
    batch_size: int = 16,
) -> float:
    """Fraction of scored positions where argmax(logits) hits the target.

    With target_segment_only, only positions after the delimiter count (the
    translation side of bilingual sequences).
    """
    from .model import batch_arrays

    seqs = list(seqs)
    hit = 0
    total = 0
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start : start + batch_size]
        ids, lang_idx, targets, mask = batch_arrays(chunk, v)
        effective = mask.copy()
        if target_segment_only:
            for r, seq in enumerate(chunk):
                if seq.delim_index is not None:
                    effective[r, : seq.delim_index] = 0.0
        logits = m.forward(ids, lang_idx)
        pred = logits.data.argmax(axis=-1)
        hit += int(((pred == targets) * (effective > 0)).sum())
        total += int((effective > 0).sum())
    if total == 0:
        raise ValueError("no scored positions to evaluate")
    return hit / total
