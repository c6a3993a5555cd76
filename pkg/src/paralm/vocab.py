"""Word-level vocabulary with control tokens and per-language identifier tokens.

Id layout is fixed: the five control tokens occupy ids 0-4, one identifier
token per registered language follows, then content tokens ordered by
descending corpus frequency (ties broken lexicographically). The vocabulary
file stores one token per line, line number = id.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

BOS_TOKEN = "⟨bos⟩"
EOS_TOKEN = "⟨eos⟩"
DELIM_TOKEN = "⟨delim⟩"
UNK_TOKEN = "⟨unk⟩"
PAD_TOKEN = "⟨pad⟩"
CONTROL_TOKENS = (BOS_TOKEN, EOS_TOKEN, DELIM_TOKEN, UNK_TOKEN, PAD_TOKEN)

BOS_ID, EOS_ID, DELIM_ID, UNK_ID, PAD_ID = range(5)


def _tag_token(lang: str) -> str:
    return f"⟨{lang}⟩"


@dataclass
class Vocabulary:
    id_to_token: list[str]
    token_to_id: dict[str, int]
    languages: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def bos(self) -> int:
        return BOS_ID

    @property
    def eos(self) -> int:
        return EOS_ID

    @property
    def delim(self) -> int:
        return DELIM_ID

    @property
    def unk(self) -> int:
        return UNK_ID

    @property
    def pad(self) -> int:
        return PAD_ID

    @property
    def lang_tags(self) -> dict[str, int]:
        return {lang: 5 + i for i, lang in enumerate(self.languages)}

    @property
    def first_content_id(self) -> int:
        return 5 + len(self.languages)

    def lang_tag(self, lang: str) -> int:
        try:
            return self.lang_tags[lang]
        except KeyError:
            raise KeyError(f"unknown language code: {lang!r}") from None

    def lang_index(self, lang: str) -> int:
        try:
            return self.languages.index(lang)
        except ValueError:
            raise KeyError(f"unknown language code: {lang!r}") from None

    def is_special(self, token_id: int) -> bool:
        return token_id < self.first_content_id

    def content_ids(self) -> range:
        return range(self.first_content_id, self.size)


def build_vocab(
    corpus_lines: Iterable[str],
    languages: Sequence[str],
    min_count: int = 1,
) -> Vocabulary:
    """Build a vocabulary from whitespace-tokenized lines.

    Content tokens with frequency below min_count are dropped (they will map
    to the unk token at encode time).
    """
    languages = tuple(languages)
    if not languages:
        raise ValueError("at least one language code is required")
    if len(set(languages)) != len(languages):
        raise ValueError(f"duplicate language codes: {list(languages)}")
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    n_lines = 0
    for line in corpus_lines:
        n_lines += 1
        counts.update(line.split())
    if n_lines == 0:
        raise ValueError("empty corpus")
    reserved = set(CONTROL_TOKENS) | {_tag_token(l) for l in languages}
    content = sorted(
        (tok for tok, c in counts.items() if c >= min_count and tok not in reserved),
        key=lambda tok: (-counts[tok], tok),
    )
    id_to_token = list(CONTROL_TOKENS) + [_tag_token(l) for l in languages] + content
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocabulary(id_to_token=id_to_token, token_to_id=token_to_id, languages=languages)


def encode(v: Vocabulary, text: str) -> list[int]:
    """Whitespace-split and map to ids; out-of-vocabulary tokens become unk."""
    return [v.token_to_id.get(tok, UNK_ID) for tok in text.split()]


def decode(v: Vocabulary, ids: Sequence[int], keep_special: bool = False) -> str:
    """Join tokens with single spaces, dropping control/tag tokens by default."""
    words = []
    for i in ids:
        i = int(i)
        if not 0 <= i < v.size:
            raise IndexError(f"token id {i} out of range [0, {v.size})")
        if keep_special or not v.is_special(i):
            words.append(v.id_to_token[i])
    return " ".join(words)


def save_vocab(v: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# languages: {','.join(v.languages)}\n")
        for tok in v.id_to_token:
            f.write(tok + "\n")


def load_vocab(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("# languages:"):
            raise ValueError(f"{path}: missing language header line")
        langs = tuple(c for c in header.split(":", 1)[1].strip().split(",") if c)
        id_to_token = [line.rstrip("\n") for line in f]
    expect = list(CONTROL_TOKENS) + [_tag_token(l) for l in langs]
    if id_to_token[: len(expect)] != expect:
        raise ValueError(f"{path}: control/tag token block does not match header")
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    if len(token_to_id) != len(id_to_token):
        raise ValueError(f"{path}: duplicate tokens in vocabulary file")
    return Vocabulary(id_to_token=id_to_token, token_to_id=token_to_id, languages=langs)
