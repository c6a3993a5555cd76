import numpy as np
import pytest

from paralm.corpus import (
    CorpusFormatError, NoiseConfig, ParallelPair, all_cross_directions,
    assemble_bilingual, assemble_monolingual, corrupt_delete, corrupt_insert,
    corrupt_reorder, gen_synthetic_corpus, load_parallel_tsv, save_parallel_tsv,
)
from paralm.synthlang import SyntheticLangSpec, deparse_to_concepts
from paralm.vocab import build_vocab

WORDS = "cat sat on the mat".split()


@pytest.fixture
def vocab():
    return build_vocab(
        ["cat sat on the mat", "chat assis sur le tapis", "red down big"],
        ["en", "fr"],
    )


def test_noise_defaults_enable_delete_and_reorder_only():
    cfg = NoiseConfig()
    assert cfg.rate == 0.01
    assert cfg.enable_delete and cfg.enable_reorder and not cfg.enable_insert
    assert cfg.max_swap_distance == 5


def test_parallel_pair_validation():
    with pytest.raises(ValueError):
        ParallelPair("en", "en", ["a"], ["b"])
    with pytest.raises(ValueError):
        ParallelPair("en", "fr", [], ["b"])


# --- corruption ---------------------------------------------------------


def test_delete_rate_zero_is_identity():
    rng = np.random.default_rng(0)
    assert corrupt_delete(WORDS, 0.0, rng) == WORDS


def test_delete_keeps_a_survivor():
    rng = np.random.default_rng(0)
    for _ in range(50):
        out = corrupt_delete(["only"], 1.0, rng)
        assert len(out) == 1


def test_delete_can_drop_a_middle_token():
    # the documented example: 'sat' sampled for deletion
    for seed in range(200):
        out = corrupt_delete(WORDS, 0.2, np.random.default_rng(seed))
        if out == ["cat", "on", "the", "mat"]:
            return
    pytest.fail("never observed the single-deletion outcome")


def test_delete_fraction_matches_rate():
    rng = np.random.default_rng(1)
    total = 0
    deleted = 0
    for _ in range(1000):
        sent = [str(i) for i in range(100)]
        out = corrupt_delete(sent, 0.01, rng)
        total += len(sent)
        deleted += len(sent) - len(out)
    assert 0.008 <= deleted / total <= 0.012


def test_insert_rate_zero_is_identity(vocab):
    rng = np.random.default_rng(0)
    assert corrupt_insert(WORDS, 0.0, vocab, rng) == WORDS


def test_insert_only_content_tokens(vocab):
    rng = np.random.default_rng(2)
    special = set(vocab.id_to_token[: vocab.first_content_id])
    for _ in range(300):
        out = corrupt_insert(WORDS, 0.3, vocab, rng)
        assert not (set(out) & special)
        assert len(out) >= len(WORDS)


def test_insert_rejects_empty_content_vocab():
    empty = build_vocab(["x"], ["en"], min_count=5)
    with pytest.raises(ValueError, match="content"):
        corrupt_insert(WORDS, 0.5, empty, np.random.default_rng(0))


def test_reorder_rate_zero_is_identity():
    rng = np.random.default_rng(0)
    assert corrupt_reorder(WORDS, 0.0, 5, rng) == WORDS


def test_reorder_preserves_multiset_and_distance():
    rng = np.random.default_rng(3)
    sent = [str(i) for i in range(40)]
    for _ in range(200):
        out = corrupt_reorder(sent, 0.1, 5, rng)
        assert sorted(out) == sorted(sent)
        for pos, tok in enumerate(out):
            assert abs(pos - int(tok)) <= 2 * 5  # two swaps can move a token twice


def test_reorder_single_swap_distance_within_bound():
    # with exactly one swap event the displaced tokens sit within max_dist
    hits = 0
    for seed in range(400):
        rng = np.random.default_rng(seed)
        sent = [str(i) for i in range(30)]
        out = corrupt_reorder(sent, 0.01, 5, rng)
        moved = [i for i, t in enumerate(out) if t != sent[i]]
        if len(moved) == 2:
            hits += 1
            assert abs(moved[0] - moved[1]) <= 5
    assert hits > 10


def test_reorder_paper_style_distance_four_swap():
    for seed in range(500):
        out = corrupt_reorder(WORDS, 0.2, 5, np.random.default_rng(seed))
        if out == ["mat", "sat", "on", "the", "cat"]:
            return
    pytest.fail("never observed the end-to-end swap")


# --- assembly -----------------------------------------------------------


def test_assemble_monolingual_format(vocab):
    seq = assemble_monolingual(["cat", "sat"], "en", vocab)
    expect = [vocab.bos, vocab.lang_tag("en"),
              vocab.token_to_id["cat"], vocab.token_to_id["sat"], vocab.eos]
    assert seq.ids.tolist() == expect
    assert seq.loss_mask.tolist() == [0.0, 1.0, 1.0, 1.0, 1.0]
    assert seq.langs == ["en"] * 5
    assert seq.delim_index is None


def test_assemble_monolingual_empty_rejected(vocab):
    with pytest.raises(ValueError):
        assemble_monolingual([], "en", vocab)


def test_assemble_bilingual_is_the_documented_sequence(vocab):
    pair = ParallelPair("en", "fr", "cat sat on the mat".split(),
                        "chat assis sur le tapis".split())
    seq = assemble_bilingual(pair, None, vocab)
    toks = [vocab.id_to_token[i] for i in seq.ids]
    assert toks == ["⟨bos⟩", "⟨en⟩", "cat", "sat", "on", "the", "mat",
                    "⟨delim⟩", "⟨fr⟩", "chat", "assis", "sur", "le",
                    "tapis", "⟨eos⟩"]
    assert seq.delim_index == 7
    assert seq.langs == ["en"] * 8 + ["fr"] * 7
    assert seq.loss_mask[0] == 0 and seq.loss_mask[seq.delim_index] == 0
    assert seq.loss_mask.sum() == len(seq) - 2
    assert seq.target_ids is None


def test_bilingual_noise_never_touches_target(vocab):
    pair = ParallelPair("en", "fr", "cat sat on the mat".split(),
                        "chat assis sur le tapis".split())
    clean = assemble_bilingual(pair, None, vocab)
    noise = NoiseConfig(rate=0.3, seed=9)
    for seed in range(30):
        seq = assemble_bilingual(pair, noise, vocab, np.random.default_rng(seed))
        tgt = seq.ids[seq.delim_index:].tolist()
        expect_tgt = clean.ids[clean.delim_index:].tolist()
        assert tgt == expect_tgt


def test_bilingual_length_preserving_noise_scores_clean_source(vocab):
    pair = ParallelPair("en", "fr", "cat sat on the mat".split(),
                        "chat assis sur le tapis".split())
    noise = NoiseConfig(rate=0.5, enable_delete=False, enable_reorder=True, seed=0)
    for seed in range(50):
        seq = assemble_bilingual(pair, noise, vocab, np.random.default_rng(seed))
        if seq.target_ids is not None:
            src_targets = [vocab.id_to_token[i] for i in seq.target_ids[2:seq.delim_index]]
            assert src_targets == pair.src_tokens
            assert seq.loss_mask[1:seq.delim_index].sum() == seq.delim_index - 1
            return
    pytest.fail("reordering at rate 0.5 never changed the source")


def test_bilingual_length_changing_noise_masks_source(vocab):
    pair = ParallelPair("en", "fr", "cat sat on the mat".split(),
                        "chat assis sur le tapis".split())
    noise = NoiseConfig(rate=0.9, enable_delete=True, enable_reorder=False, seed=0)
    for seed in range(50):
        seq = assemble_bilingual(pair, noise, vocab, np.random.default_rng(seed))
        if len(seq) < len(assemble_bilingual(pair, None, vocab)):
            assert seq.loss_mask[1:seq.delim_index].sum() == 0
            assert seq.loss_mask[seq.delim_index + 1:].sum() == len(seq) - seq.delim_index - 1
            return
    pytest.fail("deletion at rate 0.9 never shortened the source")


def test_bilingual_same_seed_same_sequence(vocab):
    pair = ParallelPair("en", "fr", WORDS, "chat assis sur le tapis".split())
    noise = NoiseConfig(rate=0.3)
    a = assemble_bilingual(pair, noise, vocab, np.random.default_rng(42))
    b = assemble_bilingual(pair, noise, vocab, np.random.default_rng(42))
    assert a.ids.tolist() == b.ids.tolist()
    assert a.loss_mask.tolist() == b.loss_mask.tolist()


# --- corpus IO ----------------------------------------------------------


def test_tsv_round_trip(tmp_path):
    path = str(tmp_path / "c.tsv")
    pairs = [ParallelPair("en", "fr", ["cat", "sat"], ["chat", "assis"])]
    save_parallel_tsv(pairs, path)
    loaded = list(load_parallel_tsv(path))
    assert loaded[0].src_lang == "en"
    assert loaded[0].tgt_tokens == ["chat", "assis"]


def test_tsv_wrong_columns_names_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("en\tfr\tcat sat\tchat assis\nen\tfr\tmissing\n")
    with pytest.raises(CorpusFormatError, match=":2"):
        list(load_parallel_tsv(str(path)))


def test_tsv_unknown_language(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("en\tzz\tcat\tchat\n")
    with pytest.raises(CorpusFormatError, match="zz"):
        list(load_parallel_tsv(str(path), allowed_langs=["en", "fr"]))


def test_tsv_empty_file_is_empty_stream(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    assert list(load_parallel_tsv(str(path))) == []


# --- synthetic corpus ----------------------------------------------------


@pytest.fixture
def spec():
    return SyntheticLangSpec(n_concepts=10, synonyms_per_concept=2,
                             languages=("aq", "be", "cu", "do"), seed=5)


def test_synthetic_corpus_no_same_language_pairs(spec):
    directions = all_cross_directions(spec.languages)
    assert len(directions) == 12
    pairs = gen_synthetic_corpus(spec, 60, (3, 7), directions)
    assert all(p.src_lang != p.tgt_lang for p in pairs)
    assert {(p.src_lang, p.tgt_lang) for p in pairs} == set(directions)


def test_synthetic_corpus_rejects_same_language_direction(spec):
    with pytest.raises(ValueError, match="same-language"):
        gen_synthetic_corpus(spec, 10, (3, 5), [("aq", "aq")])


def test_synthetic_corpus_oracle_round_trip(spec):
    pairs = gen_synthetic_corpus(spec, 120, (3, 8), all_cross_directions(spec.languages))
    for p in pairs:
        src = deparse_to_concepts(p.src_tokens, p.src_lang, spec)
        tgt = deparse_to_concepts(p.tgt_tokens, p.tgt_lang, spec)
        assert src is not None and src == tgt


def test_synthetic_corpus_deterministic(spec):
    a = gen_synthetic_corpus(spec, 20, (3, 6), [("aq", "be")])
    b = gen_synthetic_corpus(spec, 20, (3, 6), [("aq", "be")])
    assert all(x.src_tokens == y.src_tokens and x.tgt_tokens == y.tgt_tokens
               for x, y in zip(a, b))
