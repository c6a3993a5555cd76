"""Automatic evaluation: relevance, diversity, fluency, and the exact oracle.

Relevance is the cosine of vector-extrema sentence representations built
from a word-embedding table. Diversity is Distinct-2 and inverse Self-BLEU
(1 - Self-BLEU, each sentence scored against the rest of its set). Fluency
is the mean per-token log-probability under an add-k smoothed n-gram
language model. For synthetic languages, semantic preservation is the exact
fraction of outputs whose concept sequence matches the input's.

All functions here are pure: no hidden state, no random source.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .synthlang import SyntheticLangSpec, deparse_to_concepts, lexicon, surface_token

_LM_BOS = "⟨s⟩"
_LM_EOS = "⟨/s⟩"


# ---------------------------------------------------------------------------
# diversity
# ---------------------------------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def distinct_n(sentences: Sequence[Sequence[str]], n: int) -> float:
    """Distinct n-grams over the pooled set divided by total n-gram count."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pooled: list[tuple[str, ...]] = []
    for sent in sentences:
        pooled.extend(_ngrams(sent, n))
    if not pooled:
        raise ValueError(f"no {n}-grams available in the given sentences")
    return len(set(pooled)) / len(pooled)


def bleu(candidate: Sequence[str], references: Sequence[Sequence[str]],
         max_order: int = 4) -> float:
    """Geometric mean of clipped n-gram precisions times the brevity penalty.

    Orders above one with zero matches are smoothed by adding one to both
    the numerator and denominator; a zero unigram precision keeps the score
    at exactly zero.
    """
    if not candidate:
        raise ValueError("empty candidate")
    if not references:
        raise ValueError("no references")
    log_sum = 0.0
    for order in range(1, max_order + 1):
        cand_counts = Counter(_ngrams(candidate, order))
        total = sum(cand_counts.values())
        max_ref: Counter = Counter()
        for ref in references:
            for gram, c in Counter(_ngrams(ref, order)).items():
                if c > max_ref[gram]:
                    max_ref[gram] = c
        matched = sum(min(c, max_ref[gram]) for gram, c in cand_counts.items())
        if matched == 0:
            if order == 1:
                return 0.0
            p = (matched + 1.0) / (total + 1.0)
        else:
            p = matched / total
        log_sum += math.log(p)
    c_len = len(candidate)
    r_len = min((len(r) for r in references), key=lambda L: (abs(L - c_len), L))
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_sum / max_order)


def inverse_self_bleu(sentences: Sequence[Sequence[str]]) -> float:
    """1 - mean BLEU of each sentence against all the others as references."""
    if len(sentences) < 2:
        raise ValueError(f"need at least 2 sentences, got {len(sentences)}")
    scores = []
    for i, sent in enumerate(sentences):
        refs = [s for j, s in enumerate(sentences) if j != i]
        scores.append(bleu(sent, refs))
    return 1.0 - sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# relevance
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        for tok, vec in self.vectors.items():
            if len(vec) != self.dim:
                raise ValueError(f"vector for {tok!r} has length {len(vec)}, expected {self.dim}")


def load_embeddings(path: str) -> EmbeddingTable:
    """Read the standard text layout: token then whitespace-separated floats."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            parts = raw.rstrip("\n").split()
            if not parts:
                continue
            tok, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
                if dim == 0:
                    raise ValueError(f"{path}:{lineno}: entry has no values")
            elif len(vals) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
            vectors[tok] = np.array([float(x) for x in vals])
    if not vectors:
        raise ValueError(f"{path}: empty embedding file")
    return EmbeddingTable(dim=dim, vectors=vectors)


def save_embeddings(table: EmbeddingTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tok, vec in table.vectors.items():
            f.write(tok + " " + " ".join(f"{x:.8f}" for x in vec) + "\n")


def synth_embedding_table(spec: SyntheticLangSpec, dim: int = 16,
                          synonym_noise: float = 0.05, seed: int = 0) -> EmbeddingTable:
    """Concept-aligned vectors: synonyms share a base vector plus small noise,
    so cosine relevance correlates with the exact concept oracle."""
    rng = np.random.default_rng([seed, 4])
    base = rng.normal(0.0, 1.0, size=(spec.n_concepts, dim))
    vectors = {}
    for lang in spec.languages:
        for c in range(spec.n_concepts):
            for s in range(spec.synonyms_per_concept):
                tok = surface_token(lang, c, s)
                vectors[tok] = base[c] + synonym_noise * rng.normal(0.0, 1.0, size=dim)
    return EmbeddingTable(dim=dim, vectors=vectors)


def _extrema_vector(tokens: Sequence[str], emb: EmbeddingTable) -> np.ndarray | None:
    rows = [emb.vectors[t] for t in tokens if t in emb.vectors]
    if not rows:
        return None
    stacked = np.stack(rows)
    idx = np.abs(stacked).argmax(axis=0)
    return stacked[idx, np.arange(emb.dim)]


def vector_extrema_relevance(a: Sequence[str], b: Sequence[str],
                             emb: EmbeddingTable) -> float:
    """Cosine of sign-preserving per-dimension extrema sentence vectors.

    Out-of-table tokens are skipped; a sentence with no in-table token is an
    error.
    """
    va = _extrema_vector(a, emb)
    vb = _extrema_vector(b, emb)
    if va is None or vb is None:
        raise ValueError("sentence has no tokens in the embedding table")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(va @ vb / (na * nb))


# ---------------------------------------------------------------------------
# fluency
# ---------------------------------------------------------------------------


@dataclass
class NGramLM:
    """Add-k smoothed n-gram model with bos padding and an end-of-sentence event.

    The event vocabulary covers every token seen in training plus the
    end-of-sentence marker, so conditional probabilities sum to one for any
    context.
    """

    order: int
    add_k: float
    counts: dict[tuple[str, ...], Counter] = field(default_factory=dict)
    context_totals: dict[tuple[str, ...], int] = field(default_factory=dict)
    event_vocab: set[str] = field(default_factory=set)

    def prob(self, context: tuple[str, ...], token: str) -> float:
        vsize = len(self.event_vocab)
        ctx_counter = self.counts.get(context)
        c = ctx_counter[token] if ctx_counter is not None else 0
        total = self.context_totals.get(context, 0)
        return (c + self.add_k) / (total + self.add_k * vsize)


def train_ngram_lm(corpus: Sequence[Sequence[str]], order: int, add_k: float) -> NGramLM:
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if add_k <= 0:
        raise ValueError(f"add_k must be positive, got {add_k}")
    if not corpus:
        raise ValueError("empty corpus")
    lm = NGramLM(order=order, add_k=add_k)
    lm.event_vocab.add(_LM_EOS)
    for sent in corpus:
        events = list(sent) + [_LM_EOS]
        lm.event_vocab.update(sent)
        history = [_LM_BOS] * (order - 1) + list(sent)
        for i, token in enumerate(events):
            context = tuple(history[i : i + order - 1])
            counter = lm.counts.get(context)
            if counter is None:
                counter = Counter()
                lm.counts[context] = counter
            counter[token] += 1
            lm.context_totals[context] = lm.context_totals.get(context, 0) + 1
    return lm


def sentence_logprob(lm: NGramLM, tokens: Sequence[str]) -> tuple[float, int]:
    """(total natural-log probability, number of events) for one sentence."""
    events = list(tokens) + [_LM_EOS]
    history = [_LM_BOS] * (lm.order - 1) + list(tokens)
    total = 0.0
    for i, token in enumerate(events):
        context = tuple(history[i : i + lm.order - 1])
        total += math.log(lm.prob(context, token))
    return total, len(events)


def fluency_logprob(lm: NGramLM, sentences: Sequence[Sequence[str]]) -> float:
    """Mean per-event log probability pooled over all sentences."""
    if not sentences:
        raise ValueError("no sentences to score")
    total = 0.0
    n = 0
    for sent in sentences:
        lp, k = sentence_logprob(lm, sent)
        total += lp
        n += k
    return total / n


# ---------------------------------------------------------------------------
# oracle-based scores
# ---------------------------------------------------------------------------


def semantic_preservation(
    inputs: Sequence[str],
    outputs: Sequence[Sequence[str]],
    lang: str,
    spec: SyntheticLangSpec,
) -> float:
    """Fraction of outputs whose concept sequence equals their input's.

    An output that fails to de-render (any token outside the language's
    lexicon) counts as non-preserving.
    """
    if len(inputs) != len(outputs):
        raise ValueError(f"{len(inputs)} inputs but {len(outputs)} output groups")
    hits = 0
    total = 0
    for text, group in zip(inputs, outputs):
        ref = deparse_to_concepts(text.split(), lang, spec)
        if ref is None:
            raise ValueError(f"input sentence does not de-render in {lang!r}: {text!r}")
        for out in group:
            tokens = out.split() if isinstance(out, str) else list(out)
            total += 1
            if deparse_to_concepts(tokens, lang, spec) == ref:
                hits += 1
    if total == 0:
        raise ValueError("no outputs to score")
    return hits / total


def language_purity(outputs: Sequence[str], lang: str, spec: SyntheticLangSpec) -> float:
    """Fraction of generated tokens that belong to the language's lexicon."""
    lex = lexicon(spec, lang)
    total = 0
    hits = 0
    for out in outputs:
        tokens = out.split() if isinstance(out, str) else list(out)
        total += len(tokens)
        hits += sum(1 for t in tokens if t in lex)
    if total == 0:
        raise ValueError("no generated tokens to score")
    return hits / total


# ---------------------------------------------------------------------------
# report record
# ---------------------------------------------------------------------------

REPORT_FIELDS = ("system", "temperature", "relevance", "distinct2",
                 "inverse_self_bleu", "fluency_logprob", "semantic_preservation")


@dataclass
class MetricReport:
    relevance: float
    distinct2: float
    inverse_self_bleu: float
    fluency_logprob: float
    semantic_preservation: float | None = None
    system: str = "direct"
    temperature: float = 1.0
    sampler: dict = field(default_factory=dict)

    def _value(self, name: str):
        if name == "system":
            return self.system
        v = getattr(self, name)
        return "NA" if v is None else f"{v:.6f}"

    def to_kv_lines(self) -> str:
        lines = [f"{name} = {self._value(name)}" for name in REPORT_FIELDS]
        for key, val in sorted(self.sampler.items()):
            lines.append(f"sampler.{key} = {val}")
        return "\n".join(lines) + "\n"

    def to_record_line(self) -> str:
        return "\t".join(str(self._value(name)) for name in REPORT_FIELDS)

    @staticmethod
    def record_header() -> str:
        return "\t".join(REPORT_FIELDS)
