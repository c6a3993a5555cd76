"""Prompt construction and stochastic decoding.

Paraphrasing is decoding with the output language identifier set equal to
the input language; translation uses a different identifier; the round-trip
baseline chains two translations through a pivot language. Generation is
incremental with a per-layer key/value cache and stays numerically
equivalent to a full forward pass over the growing prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import SequenceLengthError, TransformerLM, predicted_lang_ids
from .vocab import Vocabulary, decode as decode_ids


@dataclass
class SamplerConfig:
    strategy: str = "top_k"
    k: int = 3
    temperature: float = 1.0
    max_new_tokens: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("greedy", "top_k"):
            raise ValueError(f"strategy must be 'greedy' or 'top_k', got {self.strategy!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class GenerationResult:
    tokens: list[int]
    terminated_by: str
    logprobs: list[float] = field(default_factory=list)


def build_prompt(tokens: Sequence[str], src_lang: str, tgt_lang: str,
                 v: Vocabulary) -> np.ndarray:
    """ids for: bos <src-tag> tokens... delim <tgt-tag>."""
    if not tokens:
        raise ValueError("cannot build a prompt from an empty sentence")
    ids = [v.bos, v.lang_tag(src_lang)]
    ids += [v.token_to_id.get(tok, v.unk) for tok in tokens]
    ids += [v.delim, v.lang_tag(tgt_lang)]
    return np.array(ids, dtype=np.int64)


def sample_next(logits: np.ndarray, cfg: SamplerConfig,
                rng: np.random.Generator | None = None) -> int:
    """Pick the next token id: argmax, or temperature-scaled top-k sampling.

    The candidate set is the k highest logits; ties are broken toward the
    lowest token id, so sampling is reproducible.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if cfg.strategy == "greedy":
        return int(np.argmax(logits))
    scaled = logits / cfg.temperature
    k = min(cfg.k, scaled.size)
    candidates = np.argsort(-scaled, kind="stable")[:k]
    z = scaled[candidates]
    e = np.exp(z - z.max())
    probs = e / e.sum()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return int(candidates[rng.choice(k, p=probs)])


def _banned_ids(v: Vocabulary) -> list[int]:
    # Control and identifier tokens are never emitted; eos stays samplable
    # because it terminates generation.
    return [v.bos, v.delim, v.unk, v.pad] + list(v.lang_tags.values())


def prompt_lang_codes(prompt: np.ndarray, v: Vocabulary) -> list[str]:
    """Per-position language codes of a prompt, by segment."""
    tag_to_lang = {tag: lang for lang, tag in v.lang_tags.items()}
    langs: list[str | None] = []
    current: str | None = None
    for tid in prompt:
        tid = int(tid)
        if tid in tag_to_lang:
            current = tag_to_lang[tid]
        langs.append(current)
    # bos precedes the first tag and belongs to the source segment
    first = next(c for c in langs if c is not None)
    return [first if c is None else c for c in langs]


def generate(
    m: TransformerLM,
    prompt: np.ndarray,
    tgt_lang: str,
    cfg: SamplerConfig,
    v: Vocabulary,
    rng: np.random.Generator | None = None,
    verify_full: bool = False,
) -> GenerationResult:
    """Auto-regressive decoding until eos or the length cap.

    The recorded log-probabilities are those of the chosen tokens under the
    untruncated distribution (control/tag tokens masked out) at temperature
    one. With verify_full, every step's incremental logits are checked
    against a full forward pass at 1e-9.
    """
    prompt = np.asarray(prompt, dtype=np.int64)
    if len(prompt) == 0 or int(prompt[-1]) not in v.lang_tags.values():
        raise ValueError("prompt must end with a language identifier token")
    if len(prompt) > m.config.max_len:
        raise SequenceLengthError(
            f"prompt length {len(prompt)} exceeds max_len {m.config.max_len}"
        )
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    tgt_idx = v.lang_index(tgt_lang)
    if cfg.max_new_tokens is not None:
        cap = cfg.max_new_tokens
    else:
        # Hard stop against degenerate loops: twice the prompt content plus slack.
        cap = 2 * max(0, len(prompt) - 4) + 8
    cap = min(cap, m.config.max_len - len(prompt))

    prompt_codes = prompt_lang_codes(prompt, v)
    lang_row = np.array([[v.lang_index(c) for c in prompt_codes]], dtype=np.int64)
    pred_row = predicted_lang_ids(lang_row)[0]

    cache = m.init_cache()
    logits = None
    for pos, tid in enumerate(prompt):
        need = pos == len(prompt) - 1
        logits = m.forward_step(cache, int(tid), pos, int(pred_row[pos]), need_logits=need)

    banned = _banned_ids(v)
    seq_ids = list(int(t) for t in prompt)
    seq_codes = list(prompt_codes)
    tokens: list[int] = []
    logprobs: list[float] = []
    terminated_by = "length_cap"
    for step in range(cap):
        if verify_full:
            _check_against_full(m, seq_ids, seq_codes, v, logits)
        masked = logits.copy()
        masked[banned] = -np.inf
        choice = sample_next(masked, cfg, rng)
        logprobs.append(float(_log_softmax_at(masked, choice)))
        if choice == v.eos:
            terminated_by = "eos"
            break
        tokens.append(choice)
        seq_ids.append(choice)
        seq_codes.append(tgt_lang)
        if len(seq_ids) >= m.config.max_len:
            break
        logits = m.forward_step(cache, choice, len(seq_ids) - 1, tgt_idx)
    return GenerationResult(tokens=tokens, terminated_by=terminated_by, logprobs=logprobs)


def _log_softmax_at(logits: np.ndarray, idx: int) -> float:
    finite = logits[np.isfinite(logits)]
    m = finite.max()
    lse = m + np.log(np.exp(finite - m).sum())
    return float(logits[idx] - lse)


def _check_against_full(m: TransformerLM, seq_ids: list[int], seq_codes: list[str],
                        v: Vocabulary, incremental_logits: np.ndarray) -> None:
    ids = np.array([seq_ids], dtype=np.int64)
    lang_idx = np.array([[v.lang_index(c) for c in seq_codes]], dtype=np.int64)
    full = m.forward(ids, lang_idx).data[0, -1]
    err = float(np.max(np.abs(full - incremental_logits)))
    if err > 1e-9:
        raise AssertionError(f"incremental/full forward mismatch: {err:.3e}")


def _derived_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def translate(
    m: TransformerLM,
    sentence: str,
    src_lang: str,
    tgt_lang: str,
    cfg: SamplerConfig,
    v: Vocabulary,
    rng: np.random.Generator | None = None,
    verify_full: bool = False,
) -> str:
    prompt = build_prompt(sentence.split(), src_lang, tgt_lang, v)
    result = generate(m, prompt, tgt_lang, cfg, v, rng=rng, verify_full=verify_full)
    return decode_ids(v, result.tokens)


def paraphrase(
    m: TransformerLM,
    sentence: str,
    lang: str,
    cfg: SamplerConfig,
    v: Vocabulary,
    n_samples: int = 1,
) -> list[str]:
    """n independent same-language generations; sample seeds derive from cfg.seed."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    prompt = build_prompt(sentence.split(), lang, lang, v)
    out = []
    for s in range(n_samples):
        result = generate(m, prompt, lang, cfg, v, rng=_derived_rng(cfg.seed, s))
        out.append(decode_ids(v, result.tokens))
    return out


def round_trip_pivot(
    m: TransformerLM,
    sentence: str,
    lang: str,
    pivot_lang: str,
    cfg: SamplerConfig,
    v: Vocabulary,
) -> str:
    """Two-step baseline: translate into the pivot language and back."""
    if pivot_lang == lang:
        raise ValueError(f"pivot language must differ from the input language ({lang!r})")
    forward_text = translate(m, sentence, lang, pivot_lang, cfg, v,
                             rng=_derived_rng(cfg.seed, 0))
    if not forward_text:
        return ""
    return translate(m, forward_text, pivot_lang, lang, cfg, v,
                     rng=_derived_rng(cfg.seed, 1))
