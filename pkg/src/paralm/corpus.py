"""Training-sequence assembly, source-side corruption, and corpus ingestion.

Sequences follow the concatenated format
``bos <src-tag> x1 .. xn delim <tgt-tag> y1 .. ym eos`` with one language
code recorded per position and a 0/1 mask marking the positions whose
prediction is scored. Corruption (delete / insert / reorder) only ever
touches the source segment; the target segment stays clean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .synthlang import SyntheticLangSpec, render, sample_concepts
from .vocab import UNK_ID, Vocabulary


class CorpusFormatError(ValueError):
    """Malformed corpus file content, reported with a line number."""


@dataclass
class ParallelPair:
    src_lang: str
    tgt_lang: str
    src_tokens: list[str]
    tgt_tokens: list[str]

    def __post_init__(self):
        if self.src_lang == self.tgt_lang:
            raise ValueError(f"parallel pair requires distinct languages, got {self.src_lang!r} twice")
        if not self.src_tokens or not self.tgt_tokens:
            raise ValueError("parallel pair sides must be non-empty")


@dataclass
class NoiseConfig:
    rate: float = 0.01
    enable_delete: bool = True
    enable_insert: bool = False
    enable_reorder: bool = True
    max_swap_distance: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must lie in [0,1], got {self.rate}")
        if self.max_swap_distance < 1:
            raise ValueError(f"max_swap_distance must be >= 1, got {self.max_swap_distance}")


@dataclass
class TrainingSequence:
    """Token ids plus per-position language codes and loss mask.

    loss_mask[i] = 1 means the token at position i is a scored prediction
    target. target_ids, when present, supplies the scored token at each
    position (used when the visible source context is corrupted but the
    loss references the clean source); otherwise targets equal ids.
    """

    ids: np.ndarray
    langs: list[str]
    loss_mask: np.ndarray
    delim_index: int | None = None
    target_ids: np.ndarray | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.loss_mask = np.asarray(self.loss_mask, dtype=np.float64)
        n = len(self.ids)
        if len(self.langs) != n or len(self.loss_mask) != n:
            raise ValueError(
                f"per-position arrays disagree: ids {n}, langs {len(self.langs)}, "
                f"mask {len(self.loss_mask)}"
            )
        if self.target_ids is not None:
            self.target_ids = np.asarray(self.target_ids, dtype=np.int64)
            if len(self.target_ids) != n:
                raise ValueError(f"target_ids length {len(self.target_ids)} != ids length {n}")

    def __len__(self) -> int:
        return len(self.ids)

    def targets(self) -> np.ndarray:
        return self.ids if self.target_ids is None else self.target_ids


# ---------------------------------------------------------------------------
# corruption operators
# ---------------------------------------------------------------------------


def corrupt_delete(tokens: Sequence[str], rate: float, rng: np.random.Generator) -> list[str]:
    """Drop each token independently with probability `rate`.

    At least one token always survives: if every token is sampled for
    deletion, one survivor is kept uniformly at random.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0,1], got {rate}")
    if not tokens:
        return []
    drop = rng.random(len(tokens)) < rate
    if drop.all():
        drop[rng.integers(len(tokens))] = False
    return [tok for tok, d in zip(tokens, drop) if not d]


def corrupt_insert(tokens: Sequence[str], rate: float, v: Vocabulary,
                   rng: np.random.Generator) -> list[str]:
    """Insert a uniformly random content token at each gap with probability `rate`."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0,1], got {rate}")
    content = v.content_ids()
    if len(content) == 0:
        raise ValueError("vocabulary has no content tokens to insert")
    out: list[str] = []
    for gap in range(len(tokens) + 1):
        if rng.random() < rate:
            out.append(v.id_to_token[int(rng.integers(content.start, content.stop))])
        if gap < len(tokens):
            out.append(tokens[gap])
    return out


def corrupt_reorder(tokens: Sequence[str], rate: float, max_dist: int,
                    rng: np.random.Generator) -> list[str]:
    """Swap each selected position with a partner at distance <= max_dist."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0,1], got {rate}")
    if max_dist < 1:
        raise ValueError(f"max_dist must be >= 1, got {max_dist}")
    out = list(tokens)
    n = len(out)
    if n < 2:
        return out
    for i in range(n):
        if rng.random() < rate:
            lo = max(0, i - max_dist)
            hi = min(n - 1, i + max_dist)
            j = i
            while j == i:
                j = int(rng.integers(lo, hi + 1))
            out[i], out[j] = out[j], out[i]
    return out


def apply_noise(tokens: Sequence[str], cfg: NoiseConfig, v: Vocabulary,
                rng: np.random.Generator) -> list[str]:
    """Apply the enabled corruption operators in delete, insert, reorder order."""
    out = list(tokens)
    if cfg.enable_delete:
        out = corrupt_delete(out, cfg.rate, rng)
    if cfg.enable_insert:
        out = corrupt_insert(out, cfg.rate, v, rng)
    if cfg.enable_reorder:
        out = corrupt_reorder(out, cfg.rate, cfg.max_swap_distance, rng)
    return out


# ---------------------------------------------------------------------------
# sequence assembly
# ---------------------------------------------------------------------------


def _to_ids(tokens: Sequence[str], v: Vocabulary) -> list[int]:
    return [v.token_to_id.get(tok, UNK_ID) for tok in tokens]


def assemble_monolingual(tokens: Sequence[str], lang: str, v: Vocabulary) -> TrainingSequence:
    """One-sentence sequence: bos tag tokens eos, every position after bos scored."""
    if not tokens:
        raise ValueError("cannot assemble an empty sentence")
    tag = v.lang_tag(lang)
    ids = [v.bos, tag, *_to_ids(tokens, v), v.eos]
    mask = [0.0] + [1.0] * (len(ids) - 1)
    return TrainingSequence(ids=np.array(ids), langs=[lang] * len(ids),
                            loss_mask=np.array(mask))


def assemble_bilingual(
    pair: ParallelPair,
    noise: NoiseConfig | None,
    v: Vocabulary,
    rng: np.random.Generator | None = None,
) -> TrainingSequence:
    """Concatenated pair sequence with optional source-side corruption.

    The scored target for each source position is the clean source token
    even when the visible input is corrupted. When corruption changes the
    source length, source-segment positions are unscored and only the
    target-side loss remains for that example.
    """
    src_clean = list(pair.src_tokens)
    if noise is not None:
        if rng is None:
            rng = np.random.default_rng(noise.seed)
        src_vis = apply_noise(src_clean, noise, v, rng)
    else:
        src_vis = src_clean

    src_tag = v.lang_tag(pair.src_lang)
    tgt_tag = v.lang_tag(pair.tgt_lang)
    src_ids = _to_ids(src_vis, v)
    tgt_ids = _to_ids(pair.tgt_tokens, v)

    ids = [v.bos, src_tag, *src_ids, v.delim, tgt_tag, *tgt_ids, v.eos]
    delim_index = 2 + len(src_ids)
    langs = [pair.src_lang] * (delim_index + 1) + [pair.tgt_lang] * (len(tgt_ids) + 2)

    # bos and delim are never scored; tags, sentence tokens and eos are.
    mask = [1.0] * len(ids)
    mask[0] = 0.0
    mask[delim_index] = 0.0

    target_ids = None
    if src_vis != src_clean:
        if len(src_vis) == len(src_clean):
            target_ids = list(ids)
            target_ids[2:2 + len(src_ids)] = _to_ids(src_clean, v)
        else:
            for i in range(1, delim_index):
                mask[i] = 0.0

    return TrainingSequence(
        ids=np.array(ids), langs=langs, loss_mask=np.array(mask),
        delim_index=delim_index,
        target_ids=None if target_ids is None else np.array(target_ids),
    )


# ---------------------------------------------------------------------------
# corpus IO and synthesis
# ---------------------------------------------------------------------------


def load_parallel_tsv(path: str, allowed_langs: Sequence[str] | None = None) -> Iterator[ParallelPair]:
    """Stream pairs from a 4-column TSV: src_lang, tgt_lang, src_text, tgt_text."""
    allowed = None if allowed_langs is None else set(allowed_langs)
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise CorpusFormatError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
            src_lang, tgt_lang, src_text, tgt_text = cols
            if allowed is not None:
                for lang in (src_lang, tgt_lang):
                    if lang not in allowed:
                        raise CorpusFormatError(f"{path}:{lineno}: unknown language code {lang!r}")
            try:
                yield ParallelPair(src_lang, tgt_lang, src_text.split(), tgt_text.split())
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None


def save_parallel_tsv(pairs: Iterable[ParallelPair], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(f"{p.src_lang}\t{p.tgt_lang}\t{' '.join(p.src_tokens)}\t{' '.join(p.tgt_tokens)}\n")


def gen_synthetic_corpus(
    spec: SyntheticLangSpec,
    n_pairs: int,
    length_range: tuple[int, int],
    pair_whitelist: Sequence[tuple[str, str]],
) -> list[ParallelPair]:
    """Render parallel pairs from shared concept sequences.

    Directions cycle through the whitelist; source and target are rendered
    independently (independent synonym draws, each language's own order),
    deterministically from spec.seed. Same-language directions are refused.
    """
    if not pair_whitelist:
        raise ValueError("pair whitelist must be non-empty")
    for src, tgt in pair_whitelist:
        if src == tgt:
            raise ValueError(f"same-language direction ({src!r}, {tgt!r}) is not allowed")
        for lang in (src, tgt):
            if lang not in spec.languages:
                raise ValueError(f"direction language {lang!r} not in spec languages")
    lo, hi = length_range
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid length range: [{lo}, {hi}]")
    pairs = []
    for i in range(n_pairs):
        src, tgt = pair_whitelist[i % len(pair_whitelist)]
        rng = np.random.default_rng([spec.seed, 0, i])
        concepts = sample_concepts(spec, int(rng.integers(lo, hi + 1)), rng)
        pairs.append(ParallelPair(
            src_lang=src, tgt_lang=tgt,
            src_tokens=render(concepts, src, spec, rng),
            tgt_tokens=render(concepts, tgt, spec, rng),
        ))
    return pairs


def all_cross_directions(languages: Sequence[str]) -> list[tuple[str, str]]:
    return [(a, b) for a in languages for b in languages if a != b]
