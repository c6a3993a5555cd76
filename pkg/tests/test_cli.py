import json
import os

import numpy as np
import pytest

from paralm.cli import main
from paralm.corpus import load_parallel_tsv
from paralm.metrics import REPORT_FIELDS
from paralm.synthlang import SyntheticLangSpec, deparse_to_concepts, save_synth_spec
from paralm.vocab import load_vocab


@pytest.fixture(scope="module")
def spec_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("specs")
    spec = SyntheticLangSpec(n_concepts=8, synonyms_per_concept=2,
                             languages=("aq", "be", "cu", "do"),
                             reorder_period=2, seed=21)
    path = str(root / "lang.cfg")
    save_synth_spec(spec, path)
    return path, spec


@pytest.fixture(scope="module")
def corpus_file(spec_file, tmp_path_factory):
    path, _ = spec_file
    out = str(tmp_path_factory.mktemp("data") / "corpus.tsv")
    assert main(["gen-corpus", "--spec", path, "--pairs", "120",
                 "--len-min", "3", "--len-max", "6", "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def vocab_file(corpus_file, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("vocab") / "vocab.txt")
    assert main(["build-vocab", "--inputs", corpus_file,
                 "--langs", "aq,be,cu,do", "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def tiny_model(corpus_file, vocab_file, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("model") / "tiny.ckpt")
    code = main(["finetune", "--corpus", corpus_file, "--vocab", vocab_file,
                 "--steps", "30", "--batch-size", "8", "--layers", "2",
                 "--d-model", "32", "--heads", "2", "--d-ff", "64",
                 "--d-lang", "4", "--max-len", "32", "--out", out, "--seed", "3"])
    assert code == 0
    return out


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    capsys.readouterr()


def test_unknown_flag_is_usage_error(capsys):
    assert main(["gen-corpus", "--bogus", "1"]) == 2
    capsys.readouterr()


def test_missing_file_is_runtime_error(capsys):
    assert main(["build-vocab", "--inputs", "/nonexistent.txt",
                 "--langs", "aq", "--out", "/tmp/v.txt"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert err.count("\n") == 1


def test_gen_corpus_oracle_round_trip(spec_file, corpus_file):
    _, spec = spec_file
    pairs = list(load_parallel_tsv(corpus_file))
    assert len(pairs) == 120
    for p in pairs:
        src = deparse_to_concepts(p.src_tokens, p.src_lang, spec)
        tgt = deparse_to_concepts(p.tgt_tokens, p.tgt_lang, spec)
        assert src is not None and src == tgt


def test_gen_corpus_writes_manifest(corpus_file):
    manifest_path = corpus_file + ".manifest.json"
    assert os.path.exists(manifest_path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    assert manifest["subcommand"] == "gen-corpus"
    assert corpus_file in manifest["outputs"]


def test_gen_corpus_mono(spec_file, tmp_path):
    path, spec = spec_file
    out = str(tmp_path / "mono.txt")
    assert main(["gen-corpus", "--spec", path, "--mono", "--lang", "aq",
                 "--n", "15", "--len-min", "3", "--len-max", "5", "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert len(lines) == 15
    assert all(deparse_to_concepts(l.split(), "aq", spec) is not None for l in lines)


def test_build_vocab_contents(vocab_file):
    v = load_vocab(vocab_file)
    assert v.languages == ("aq", "be", "cu", "do")
    assert v.size > v.first_content_id


def test_finetune_outputs(tiny_model):
    assert os.path.exists(tiny_model)
    assert os.path.exists(tiny_model + ".vocab")
    report = open(tiny_model + ".report.tsv").read().splitlines()
    assert report[0] == "step\ttrain_loss"
    assert len(report) == 31


def test_paraphrase_emits_n_lines_per_input(tiny_model, tmp_path):
    inp = tmp_path / "in.txt"
    inp.write_text("aq0a aq1b aq2a\naq3a aq4b\n")
    out = str(tmp_path / "out.txt")
    assert main(["paraphrase", "--model", tiny_model, "--lang", "aq",
                 "--k", "3", "--temperature", "1.0", "--n", "3",
                 "--inputs", str(inp), "--out", out, "--seed", "1"]) == 0
    assert len(open(out).read().splitlines()) == 6


def test_translate_and_pivot_emit_one_line_per_input(tiny_model, tmp_path):
    inp = tmp_path / "in.txt"
    inp.write_text("aq0a aq1b aq2a\n")
    t_out = str(tmp_path / "t.txt")
    assert main(["translate", "--model", tiny_model, "--lang", "aq",
                 "--tgt-lang", "be", "--inputs", str(inp), "--out", t_out]) == 0
    assert len(open(t_out).read().splitlines()) == 1
    p_out = str(tmp_path / "p.txt")
    assert main(["pivot", "--model", tiny_model, "--lang", "aq",
                 "--pivot-lang", "be", "--inputs", str(inp), "--out", p_out]) == 0
    assert len(open(p_out).read().splitlines()) == 1


def test_evaluate_report(spec_file, tiny_model, tmp_path):
    spec_path, _ = spec_file
    inp = tmp_path / "in.txt"
    inp.write_text("aq0a aq1b aq2a\naq3a aq4b aq5a\n")
    gen = str(tmp_path / "gen.txt")
    assert main(["paraphrase", "--model", tiny_model, "--lang", "aq", "--n", "2",
                 "--inputs", str(inp), "--out", gen, "--seed", "2"]) == 0
    report = str(tmp_path / "report.txt")
    assert main(["evaluate", "--inputs", str(inp), "--outputs", gen, "--n", "2",
                 "--lang", "aq", "--spec", spec_path, "--out", report]) == 0
    content = dict(
        line.split(" = ", 1) for line in open(report).read().splitlines()
    )
    for fieldname in REPORT_FIELDS:
        assert fieldname in content
    assert "record" in content
    assert len(content["record"].split("\t")) == len(REPORT_FIELDS)


def test_sweep_row_count(spec_file, tiny_model, tmp_path):
    spec_path, _ = spec_file
    inp = tmp_path / "in.txt"
    inp.write_text("aq0a aq1b aq2a\naq3a aq4b aq5a\n")
    out = str(tmp_path / "curves.tsv")
    assert main(["sweep", "--model", tiny_model, "--inputs", str(inp),
                 "--lang", "aq", "--spec", spec_path, "--baseline", "pivot",
                 "--pivot-lang", "be", "--temps", "0.5,1.0", "--n", "2",
                 "--out", out, "--seed", "4"]) == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "\t".join(REPORT_FIELDS)
    assert len(lines) == 1 + 2 * 2  # (direct + pivot) x 2 temperatures


def test_grad_check_subcommand(tmp_path, capsys):
    out = str(tmp_path / "gc.txt")
    assert main(["grad-check", "--coords", "60", "--out", out, "--seed", "0"]) == 0
    assert "PASS" in open(out).read()
    capsys.readouterr()


def test_config_file_defaults_and_flag_override(spec_file, tmp_path):
    spec_path, _ = spec_file
    cfg = tmp_path / "run.cfg"
    cfg.write_text("pairs = 7\nlen_min = 3\nlen_max = 4\n")
    out = str(tmp_path / "c.tsv")
    assert main(["gen-corpus", "--spec", spec_path, "--config", str(cfg),
                 "--out", out]) == 0
    assert len(open(out).read().splitlines()) == 7
    # explicit flag wins over the config file
    assert main(["gen-corpus", "--spec", spec_path, "--config", str(cfg),
                 "--pairs", "3", "--out", out]) == 0
    assert len(open(out).read().splitlines()) == 3


def test_config_file_unknown_key(spec_file, tmp_path, capsys):
    spec_path, _ = spec_file
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_flag = 1\n")
    assert main(["gen-corpus", "--spec", spec_path, "--config", str(cfg),
                 "--out", str(tmp_path / "x.tsv")]) == 2
    capsys.readouterr()


def test_rerun_reproduces_bytes(spec_file, tmp_path):
    spec_path, _ = spec_file
    out = str(tmp_path / "c.tsv")
    assert main(["gen-corpus", "--spec", spec_path, "--pairs", "9",
                 "--out", out, "--seed", "5"]) == 0
    original = open(out, "rb").read()
    redirected = str(tmp_path / "c2.tsv")
    assert main(["rerun", "--manifest", out + ".manifest.json",
                 "--out", redirected]) == 0
    assert open(redirected, "rb").read() == original
