"""Constructed multilingual toy languages with an exact concept-level oracle.

Each language renders a sequence of abstract concept ids into surface tokens:
every concept has a fixed set of synonym tokens per language (lexicons of
different languages are disjoint by construction), and each language applies
its own deterministic periodic swap to adjacent concept pairs, so that no two
languages share token order. Rendering and de-rendering are exact mutual
inverses at the concept level, which gives a ground-truth semantic check for
generated text.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .configfile import parse_kv

_SYN_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class SyntheticLangSpec:
    n_concepts: int
    synonyms_per_concept: int
    languages: tuple[str, ...]
    reorder_period: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_concepts < 1:
            raise ValueError(f"n_concepts must be positive, got {self.n_concepts}")
        if self.synonyms_per_concept < 2:
            raise ValueError(
                f"synonyms_per_concept must be >= 2, got {self.synonyms_per_concept}"
            )
        if self.synonyms_per_concept > len(_SYN_LETTERS):
            raise ValueError(f"synonyms_per_concept capped at {len(_SYN_LETTERS)}")
        object.__setattr__(self, "languages", tuple(self.languages))
        if len(set(self.languages)) != len(self.languages):
            raise ValueError(f"duplicate language codes: {list(self.languages)}")
        for lang in self.languages:
            if not (lang.isalpha() and lang.islower()):
                raise ValueError(f"language codes must be lowercase alphabetic, got {lang!r}")
        if self.reorder_period < 0:
            raise ValueError(f"reorder_period must be >= 0, got {self.reorder_period}")


def surface_token(lang: str, concept: int, synonym: int) -> str:
    return f"{lang}{concept}{_SYN_LETTERS[synonym]}"


@lru_cache(maxsize=None)
def lexicon(spec: SyntheticLangSpec, lang: str) -> frozenset[str]:
    """All surface tokens of one language."""
    if lang not in spec.languages:
        raise KeyError(f"unknown language code: {lang!r}")
    return frozenset(
        surface_token(lang, c, s)
        for c in range(spec.n_concepts)
        for s in range(spec.synonyms_per_concept)
    )


@lru_cache(maxsize=None)
def _token_to_concept(spec: SyntheticLangSpec, lang: str) -> dict[str, int]:
    return {
        surface_token(lang, c, s): c
        for c in range(spec.n_concepts)
        for s in range(spec.synonyms_per_concept)
    }


def reorder_period_for(spec: SyntheticLangSpec, lang: str) -> int:
    """Effective swap period of one language; 0 disables reordering.

    Periods are offset by language index so no two languages render the
    same concept order, which rules out verbatim copying as a translation
    strategy.
    """
    if spec.reorder_period == 0:
        return 0
    return spec.reorder_period + spec.languages.index(lang)


def _apply_swaps(seq: list, period: int) -> list:
    """Swap every period-th non-overlapping adjacent pair; an involution."""
    if period == 0:
        return list(seq)
    out = list(seq)
    for pair in range(len(seq) // 2):
        if (pair + 1) % period == 0:
            i = 2 * pair
            out[i], out[i + 1] = out[i + 1], out[i]
    return out


def render(concepts: Sequence[int], lang: str, spec: SyntheticLangSpec,
           rng: np.random.Generator) -> list[str]:
    """Surface a concept sequence in one language, sampling synonyms."""
    for c in concepts:
        if not 0 <= c < spec.n_concepts:
            raise ValueError(f"concept id {c} out of range [0, {spec.n_concepts})")
    ordered = _apply_swaps(list(concepts), reorder_period_for(spec, lang))
    return [
        surface_token(lang, c, int(rng.integers(spec.synonyms_per_concept)))
        for c in ordered
    ]


def deparse_to_concepts(tokens: Sequence[str], lang: str,
                        spec: SyntheticLangSpec) -> list[int] | None:
    """Invert synonym tables and the language's reorder rule.

    Returns None when any token is not in the language's lexicon; failure is
    a value, not an error.
    """
    table = _token_to_concept(spec, lang)
    surface_order = []
    for tok in tokens:
        c = table.get(tok)
        if c is None:
            return None
        surface_order.append(c)
    return _apply_swaps(surface_order, reorder_period_for(spec, lang))


@lru_cache(maxsize=None)
def concept_chain(spec: SyntheticLangSpec) -> tuple[np.ndarray, np.ndarray]:
    """First-order Markov chain over concepts, derived from spec.seed.

    Gives the languages genuine sequential structure (so n-gram fluency is
    measurable) while every concept keeps non-trivial probability mass.
    """
    rng = np.random.default_rng([spec.seed, 2])
    init = np.exp(0.7 * rng.normal(size=spec.n_concepts))
    init /= init.sum()
    trans = np.exp(0.8 * rng.normal(size=(spec.n_concepts, spec.n_concepts)))
    trans /= trans.sum(axis=1, keepdims=True)
    return init, trans


def sample_concepts(spec: SyntheticLangSpec, length: int,
                    rng: np.random.Generator) -> list[int]:
    """Draw a concept sequence from the spec's Markov chain."""
    init, trans = concept_chain(spec)
    out = []
    c = int(rng.choice(spec.n_concepts, p=init))
    for _ in range(length):
        out.append(c)
        c = int(rng.choice(spec.n_concepts, p=trans[c]))
    return out


def gen_synthetic_monolingual(
    spec: SyntheticLangSpec,
    n_sentences: int,
    length_range: tuple[int, int],
    lang: str,
) -> list[list[str]]:
    """Deterministic monolingual sentences for one language."""
    lo, hi = length_range
    lang_idx = spec.languages.index(lang)
    out = []
    for i in range(n_sentences):
        rng = np.random.default_rng([spec.seed, 1, lang_idx, i])
        length = int(rng.integers(lo, hi + 1))
        out.append(render(sample_concepts(spec, length, rng), lang, spec, rng))
    return out


def load_synth_spec(path: str) -> SyntheticLangSpec:
    """Read a key = value spec file (n_concepts, synonyms_per_concept,
    languages, reorder_period, seed)."""
    kv = parse_kv(path)
    known = {"n_concepts", "synonyms_per_concept", "languages", "reorder_period", "seed"}
    unknown = set(kv) - known
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    missing = {"n_concepts", "synonyms_per_concept", "languages"} - set(kv)
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    return SyntheticLangSpec(
        n_concepts=int(kv["n_concepts"]),
        synonyms_per_concept=int(kv["synonyms_per_concept"]),
        languages=tuple(c.strip() for c in kv["languages"].split(",") if c.strip()),
        reorder_period=int(kv.get("reorder_period", "1")),
        seed=int(kv.get("seed", "0")),
    )


def save_synth_spec(spec: SyntheticLangSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"n_concepts = {spec.n_concepts}\n")
        f.write(f"synonyms_per_concept = {spec.synonyms_per_concept}\n")
        f.write(f"languages = {','.join(spec.languages)}\n")
        f.write(f"reorder_period = {spec.reorder_period}\n")
        f.write(f"seed = {spec.seed}\n")
