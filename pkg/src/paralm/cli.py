"""Single command-line entry point.

Subcommands: gen-corpus, build-vocab, pretrain, finetune, paraphrase,
translate, pivot, evaluate, sweep, grad-check, rerun. Every run that names
an --out file writes a JSON manifest next to it recording the fully
resolved argument vector, the master seed, and sha256 checksums of inputs
and outputs; `rerun --manifest <file>` replays a run from that record.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .configfile import parse_kv
from .corpus import (
    CorpusFormatError, NoiseConfig, all_cross_directions, gen_synthetic_corpus,
    load_parallel_tsv, save_parallel_tsv,
)
from .decode import SamplerConfig, paraphrase, round_trip_pivot, translate
from .metrics import (
    MetricReport, distinct_n, fluency_logprob, inverse_self_bleu, load_embeddings,
    semantic_preservation, synth_embedding_table, train_ngram_lm,
    vector_extrema_relevance,
)
from .model import CheckpointError, ModelConfig, init_model, load_checkpoint
from .optim import AdamConfig, gradient_check
from .synthlang import gen_synthetic_monolingual, load_synth_spec
from .training import TrainConfig, finetune, pretrain
from .vocab import build_vocab, load_vocab, save_vocab


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: str, subcommand: str, argv: list[str], seed: int,
                    inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "tool": "paralm",
        "version": __version__,
        "subcommand": subcommand,
        "argv": argv,
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": {p: _sha256(p) for p in outputs},
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _canonical_argv(sub: str, args: argparse.Namespace, parser: argparse.ArgumentParser) -> list[str]:
    """Rebuild a fully resolved argument vector from a parsed namespace."""
    argv = [sub]
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "config"):
            continue
        value = getattr(args, action.dest, None)
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif isinstance(action, argparse._AppendAction):
            for item in value or []:
                argv += [flag, str(item)]
        elif value is not None:
            argv += [flag, str(value)]
    return argv


def _read_lines(path: str | None):
    if path is None:
        return [line.rstrip("\n") for line in sys.stdin]
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def _iter_lines(path: str | None):
    """Stream non-empty input lines from a file or stdin."""
    stream = sys.stdin if path is None else open(path, encoding="utf-8")
    try:
        for line in stream:
            line = line.rstrip("\n")
            if line:
                yield line
    finally:
        if path is not None:
            stream.close()


class _LineSink:
    """Write lines to --out or stdout as they are produced."""

    def __init__(self, path: str | None):
        self._file = open(path, "w", encoding="utf-8") if path else None

    def write(self, line: str) -> None:
        if self._file:
            self._file.write(line + "\n")
        else:
            print(line)

    def close(self) -> None:
        if self._file:
            self._file.close()


def _resolved_seed(args) -> int:
    return 0 if getattr(args, "seed", None) is None else args.seed


def _vocab_path(args) -> str:
    if getattr(args, "vocab", None):
        return args.vocab
    if getattr(args, "model", None):
        return args.model + ".vocab"
    raise ValueError("no vocabulary: pass --vocab or use a model with a .vocab sidecar")


def _model_config(args, vocab_size: int, n_languages: int) -> ModelConfig:
    return ModelConfig(
        n_layers=args.layers, d_model=args.d_model, n_heads=args.heads,
        d_ff=args.d_ff, d_lang=args.d_lang, max_len=args.max_len,
        vocab_size=vocab_size, n_languages=n_languages,
    )


def _sampler(args, seed: int) -> SamplerConfig:
    return SamplerConfig(
        strategy="greedy" if getattr(args, "greedy", False) else "top_k",
        k=args.k, temperature=args.temperature,
        max_new_tokens=getattr(args, "max_new_tokens", None), seed=seed,
    )


def _write_train_report(path: str, report) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("step\ttrain_loss\n")
        for step, loss in report.train_loss:
            f.write(f"{step}\t{loss:.10f}\n")
        for step, nll in report.heldout_nll:
            f.write(f"# heldout\t{step}\t{nll:.10f}\n")


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (input_paths, output_paths)
# ---------------------------------------------------------------------------


def _cmd_gen_corpus(args):
    spec = load_synth_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    length_range = (args.len_min, args.len_max)
    if args.mono:
        if not args.lang:
            raise ValueError("--mono requires --lang")
        sentences = gen_synthetic_monolingual(spec, args.n, length_range, args.lang)
        with open(args.out, "w", encoding="utf-8") as f:
            for sent in sentences:
                f.write(" ".join(sent) + "\n")
    else:
        if args.directions == "all-cross":
            directions = all_cross_directions(spec.languages)
        else:
            directions = []
            for item in args.directions.split(","):
                src, _, tgt = item.partition("-")
                directions.append((src.strip(), tgt.strip()))
        pairs = gen_synthetic_corpus(spec, args.pairs, length_range, directions)
        save_parallel_tsv(pairs, args.out)
    return [args.spec], [args.out]


def _cmd_build_vocab(args):
    langs = [c.strip() for c in args.langs.split(",") if c.strip()]

    def lines():
        for path in args.inputs:
            with open(path, encoding="utf-8") as f:
                for line in f:
                    line = line.rstrip("\n")
                    if path.endswith(".tsv"):
                        cols = line.split("\t")
                        if len(cols) == 4:
                            yield cols[2]
                            yield cols[3]
                    elif line:
                        yield line

    v = build_vocab(lines(), langs, min_count=args.min_count)
    save_vocab(v, args.out)
    return list(args.inputs), [args.out]


def _adam_config(args):
    return AdamConfig(learning_rate=args.lr, beta1=args.beta1, beta2=args.beta2,
                      epsilon=args.epsilon, weight_decay=args.weight_decay)


def _cmd_pretrain(args):
    if len(args.corpus) != len(args.lang):
        raise ValueError(f"{len(args.corpus)} --corpus files but {len(args.lang)} --lang codes")
    v = load_vocab(args.vocab)
    seed = _resolved_seed(args)
    mono = []
    for path, lang in zip(args.corpus, args.lang):
        for line in _read_lines(path):
            if line:
                mono.append((line.split(), lang))
    if args.init:
        m = load_checkpoint(args.init)
    else:
        m = init_model(_model_config(args, v.size, len(v.languages)), seed=seed)
    heldout = None
    if args.heldout:
        if not args.heldout_lang:
            raise ValueError("--heldout requires --heldout-lang")
        from .corpus import assemble_monolingual
        heldout = [assemble_monolingual(line.split(), args.heldout_lang, v)
                   for line in _read_lines(args.heldout) if line]
    cfg = TrainConfig(
        phase="pretrain", steps=args.steps, batch_size=args.batch_size,
        adam=_adam_config(args),
        seed=seed, checkpoint_every=args.checkpoint_every,
        eval_every=args.eval_every, lr_schedule=args.lr_schedule,
    )
    report = pretrain(m, mono, cfg, v, heldout=heldout, checkpoint_path=args.out)
    save_vocab(v, args.out + ".vocab")
    _write_train_report(args.out + ".report.tsv", report)
    inputs = list(args.corpus) + [args.vocab] + ([args.init] if args.init else [])
    inputs += [args.heldout] if args.heldout else []
    return inputs, [args.out, args.out + ".vocab", args.out + ".report.tsv"]


def _cmd_finetune(args):
    v = load_vocab(args.vocab)
    seed = _resolved_seed(args)
    pairs = list(load_parallel_tsv(args.corpus, allowed_langs=v.languages))
    if args.init:
        m = load_checkpoint(args.init)
    else:
        m = init_model(_model_config(args, v.size, len(v.languages)), seed=seed)
    noise = None
    if args.dae:
        noise = NoiseConfig(
            rate=args.noise_rate, enable_delete=not args.noise_no_delete,
            enable_insert=args.noise_insert, enable_reorder=not args.noise_no_reorder,
            max_swap_distance=args.noise_max_swap_distance, seed=seed,
        )
    heldout = None
    if args.heldout:
        from .corpus import assemble_bilingual
        heldout = [assemble_bilingual(p, None, v)
                   for p in load_parallel_tsv(args.heldout, allowed_langs=v.languages)]
    cfg = TrainConfig(
        phase="finetune", steps=args.steps, batch_size=args.batch_size,
        adam=_adam_config(args),
        noise=noise, seed=seed, checkpoint_every=args.checkpoint_every,
        eval_every=args.eval_every, lr_schedule=args.lr_schedule,
    )
    report = finetune(m, pairs, cfg, v, heldout=heldout, checkpoint_path=args.out)
    save_vocab(v, args.out + ".vocab")
    _write_train_report(args.out + ".report.tsv", report)
    inputs = [args.corpus, args.vocab] + ([args.init] if args.init else [])
    inputs += [args.heldout] if args.heldout else []
    return inputs, [args.out, args.out + ".vocab", args.out + ".report.tsv"]


def _load_model_and_vocab(args):
    m = load_checkpoint(args.model)
    v = load_vocab(_vocab_path(args))
    if v.size != m.config.vocab_size or len(v.languages) != m.config.n_languages:
        raise ValueError(
            f"vocabulary ({v.size} tokens, {len(v.languages)} languages) does not match "
            f"model config ({m.config.vocab_size}, {m.config.n_languages})"
        )
    return m, v


def _cmd_paraphrase(args):
    m, v = _load_model_and_vocab(args)
    seed = _resolved_seed(args)
    sink = _LineSink(args.out)
    try:
        for i, sentence in enumerate(_iter_lines(args.inputs)):
            cfg = _sampler(args, seed + i)
            for line in paraphrase(m, sentence, args.lang, cfg, v, n_samples=args.n):
                sink.write(line)
    finally:
        sink.close()
    ins = [args.model, _vocab_path(args)] + ([args.inputs] if args.inputs else [])
    return ins, [args.out] if args.out else []


def _cmd_translate(args):
    m, v = _load_model_and_vocab(args)
    seed = _resolved_seed(args)
    sink = _LineSink(args.out)
    try:
        for i, sentence in enumerate(_iter_lines(args.inputs)):
            cfg = _sampler(args, seed + i)
            sink.write(translate(m, sentence, args.lang, args.tgt_lang, cfg, v,
                                 rng=np.random.default_rng([cfg.seed, 0])))
    finally:
        sink.close()
    ins = [args.model, _vocab_path(args)] + ([args.inputs] if args.inputs else [])
    return ins, [args.out] if args.out else []


def _cmd_pivot(args):
    m, v = _load_model_and_vocab(args)
    seed = _resolved_seed(args)
    sink = _LineSink(args.out)
    try:
        for i, sentence in enumerate(_iter_lines(args.inputs)):
            cfg = _sampler(args, seed + i)
            sink.write(round_trip_pivot(m, sentence, args.lang, args.pivot_lang, cfg, v))
    finally:
        sink.close()
    ins = [args.model, _vocab_path(args)] + ([args.inputs] if args.inputs else [])
    return ins, [args.out] if args.out else []


def compute_report(
    inputs: list[str],
    groups: list[list[str]],
    lang: str,
    spec=None,
    emb=None,
    fluency_sentences: list[list[str]] | None = None,
    system: str = "direct",
    temperature: float = 1.0,
    sampler: dict | None = None,
) -> MetricReport:
    """Aggregate the metric suite over per-input output groups.

    Relevance averages input/output extrema cosines (unscorable outputs
    count as 0); Distinct-2 and inverse Self-BLEU average per-input values.
    """
    rel_values = []
    d2_values = []
    isb_values = []
    for text, group in zip(inputs, groups):
        in_toks = text.split()
        for out in group:
            try:
                rel_values.append(vector_extrema_relevance(in_toks, out.split(), emb))
            except ValueError:
                rel_values.append(0.0)
        token_groups = [out.split() for out in group]
        try:
            d2_values.append(distinct_n(token_groups, 2))
        except ValueError:
            pass
        isb_values.append(inverse_self_bleu(token_groups))
    if not d2_values:
        raise ValueError("no bigrams anywhere in the generated outputs")
    flu_corpus = fluency_sentences if fluency_sentences is not None else [t.split() for t in inputs]
    lm = train_ngram_lm(flu_corpus, order=4, add_k=0.01)
    all_outputs = [out.split() for group in groups for out in group]
    sp = None
    if spec is not None:
        sp = semantic_preservation(inputs, groups, lang, spec)
    return MetricReport(
        relevance=sum(rel_values) / len(rel_values),
        distinct2=sum(d2_values) / len(d2_values),
        inverse_self_bleu=sum(isb_values) / len(isb_values),
        fluency_logprob=fluency_logprob(lm, all_outputs),
        semantic_preservation=sp,
        system=system,
        temperature=temperature,
        sampler=sampler or {},
    )


def _group(lines: list[str], n: int) -> list[list[str]]:
    if n < 2:
        raise ValueError("metric evaluation needs at least 2 samples per input (--n)")
    if len(lines) % n != 0:
        raise ValueError(f"{len(lines)} output lines are not a multiple of n={n}")
    return [lines[i : i + n] for i in range(0, len(lines), n)]


def _embedding_table(args, spec):
    if args.emb:
        return load_embeddings(args.emb)
    if spec is not None:
        return synth_embedding_table(spec, seed=_resolved_seed(args))
    raise ValueError("relevance needs --emb, or --spec to derive a synthetic table")


def _cmd_evaluate(args):
    inputs = [s for s in _read_lines(args.inputs) if s]
    outputs = _read_lines(args.outputs)
    groups = _group([s for s in outputs], args.n)
    if len(groups) != len(inputs):
        raise ValueError(f"{len(inputs)} inputs but {len(groups)} output groups of {args.n}")
    spec = load_synth_spec(args.spec) if args.spec else None
    emb = _embedding_table(args, spec)
    fluency_sentences = None
    if args.fluency_corpus:
        fluency_sentences = [s.split() for s in _read_lines(args.fluency_corpus) if s]
    report = compute_report(
        inputs, groups, args.lang, spec=spec, emb=emb,
        fluency_sentences=fluency_sentences,
        system=args.system_label, temperature=args.temperature,
        sampler={"n": args.n},
    )
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(report.to_kv_lines())
        f.write("record = " + report.to_record_line() + "\n")
    ins = [args.inputs, args.outputs]
    ins += [p for p in (args.spec, args.emb, args.fluency_corpus) if p]
    return ins, [args.out]


def _cmd_sweep(args):
    m, v = _load_model_and_vocab(args)
    inputs = [s for s in _read_lines(args.inputs) if s]
    spec = load_synth_spec(args.spec) if args.spec else None
    emb = _embedding_table(args, spec)
    fluency_sentences = [s.split() for s in _read_lines(args.fluency_corpus) if s] \
        if args.fluency_corpus else [t.split() for t in inputs]
    temps = [float(t) for t in args.temps.split(",") if t]
    systems = ["direct"] + (["pivot"] if args.baseline == "pivot" else [])
    if "pivot" in systems and not args.pivot_lang:
        raise ValueError("--baseline pivot requires --pivot-lang")
    seed = _resolved_seed(args)
    counter = 0
    rows = []
    for temp in temps:
        for system in systems:
            groups = []
            for sentence in inputs:
                group = []
                if system == "direct":
                    cfg = SamplerConfig(strategy="top_k", k=args.k, temperature=temp,
                                        seed=seed + counter)
                    counter += 1
                    group = paraphrase(m, sentence, args.lang, cfg, v, n_samples=args.n)
                else:
                    for _ in range(args.n):
                        cfg = SamplerConfig(strategy="top_k", k=args.k, temperature=temp,
                                            seed=seed + counter)
                        counter += 1
                        group.append(round_trip_pivot(m, sentence, args.lang,
                                                      args.pivot_lang, cfg, v))
                groups.append(group)
            report = compute_report(
                inputs, groups, args.lang, spec=spec, emb=emb,
                fluency_sentences=fluency_sentences, system=system, temperature=temp,
                sampler={"k": args.k, "n": args.n},
            )
            rows.append(report.to_record_line())
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(MetricReport.record_header() + "\n")
        for row in rows:
            f.write(row + "\n")
    ins = [args.model, _vocab_path(args), args.inputs]
    ins += [p for p in (args.spec, args.emb, args.fluency_corpus) if p]
    return ins, [args.out]


def _cmd_grad_check(args):
    from .corpus import assemble_bilingual, gen_synthetic_corpus
    from .model import batch_loss
    from .synthlang import SyntheticLangSpec

    seed = _resolved_seed(args)
    spec = SyntheticLangSpec(n_concepts=6, synonyms_per_concept=2,
                             languages=("qa", "qb"), reorder_period=1, seed=seed)
    pairs = gen_synthetic_corpus(spec, 4, (3, 5), [("qa", "qb"), ("qb", "qa")])
    corpus_lines = [" ".join(p.src_tokens) + " " + " ".join(p.tgt_tokens) for p in pairs]
    v = build_vocab(corpus_lines, spec.languages, min_count=1)
    m = init_model(_model_config(args, v.size, len(v.languages)), seed=seed)
    batch = [assemble_bilingual(p, None, v) for p in pairs[:2]]

    def loss_fn(_params):
        return batch_loss(m, batch, v)

    report = gradient_check(loss_fn, m.params, tolerance=args.tolerance,
                            n_coords=args.coords, seed=seed)
    line = report.summary()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(line + "\n")
    print(line)
    if not report.passed:
        raise RuntimeError(f"gradient check failed: {line}")
    return [], [args.out] if args.out else []


def _cmd_rerun(args):
    with open(args.manifest, encoding="utf-8") as f:
        manifest = json.load(f)
    argv = list(manifest["argv"])
    if args.out:
        if "--out" not in argv:
            raise ValueError("manifest run has no --out to override")
        argv[argv.index("--out") + 1] = args.out
    return main(argv)


# ---------------------------------------------------------------------------
# parser construction
# ---------------------------------------------------------------------------


def _add_common(p, out_required=False):
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--config", default=None, help="key = value file of flag defaults")
    p.add_argument("--out", required=out_required, default=None)


def _add_model_size(p):
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=512)
    p.add_argument("--d-lang", type=int, default=16)
    p.add_argument("--max-len", type=int, default=64)


def _add_sampler(p):
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--max-new-tokens", type=int, default=None)
    p.add_argument("--n", type=int, default=1, help="samples per input line")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="paralm")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    registry = {}

    def sub(name, handler, **kwargs):
        p = subs.add_parser(name, **kwargs)
        registry[name] = (handler, p)
        return p

    p = sub("gen-corpus", _cmd_gen_corpus, help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="synthetic language spec (key = value)")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--directions", default="all-cross")
    p.add_argument("--mono", action="store_true", help="emit monolingual lines instead of pairs")
    p.add_argument("--lang", default=None)
    p.add_argument("--n", type=int, default=500, help="monolingual sentence count")
    p.add_argument("--len-min", type=int, default=4)
    p.add_argument("--len-max", type=int, default=9)
    _add_common(p, out_required=True)

    p = sub("build-vocab", _cmd_build_vocab, help="build a vocabulary file")
    p.add_argument("--inputs", action="append", required=True)
    p.add_argument("--langs", required=True, help="comma-separated language codes")
    p.add_argument("--min-count", type=int, default=1)
    _add_common(p, out_required=True)

    p = sub("pretrain", _cmd_pretrain, help="language-model pre-training on monolingual text")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--lang", action="append", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--init", default=None)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--lr-schedule", choices=["constant", "cosine"], default="constant")
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--heldout", default=None, help="held-out sentences for NLL tracking")
    p.add_argument("--heldout-lang", default=None)
    _add_model_size(p)
    _add_common(p, out_required=True)

    p = sub("finetune", _cmd_finetune, help="train on parallel pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--init", default=None)
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--lr-schedule", choices=["constant", "cosine"], default="constant")
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--dae", action="store_true", help="corrupt sources")
    p.add_argument("--noise-rate", type=float, default=0.01)
    p.add_argument("--noise-no-delete", action="store_true")
    p.add_argument("--noise-insert", action="store_true")
    p.add_argument("--noise-no-reorder", action="store_true")
    p.add_argument("--noise-max-swap-distance", type=int, default=5)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--heldout", default=None, help="held-out pairs TSV for NLL tracking")
    _add_model_size(p)
    _add_common(p, out_required=True)

    p = sub("paraphrase", _cmd_paraphrase, help="same-language generation")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--lang", required=True)
    p.add_argument("--inputs", default=None, help="input file (default stdin)")
    _add_sampler(p)
    _add_common(p)

    p = sub("translate", _cmd_translate, help="cross-language generation")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--lang", required=True, help="source language")
    p.add_argument("--tgt-lang", required=True)
    p.add_argument("--inputs", default=None)
    _add_sampler(p)
    _add_common(p)

    p = sub("pivot", _cmd_pivot, help="round-trip translation baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--lang", required=True)
    p.add_argument("--pivot-lang", required=True)
    p.add_argument("--inputs", default=None)
    _add_sampler(p)
    _add_common(p)

    p = sub("evaluate", _cmd_evaluate, help="score generated outputs")
    p.add_argument("--inputs", required=True)
    p.add_argument("--outputs", required=True)
    p.add_argument("--n", type=int, required=True, help="samples per input in the outputs file")
    p.add_argument("--lang", required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--emb", default=None)
    p.add_argument("--fluency-corpus", default=None)
    p.add_argument("--system-label", default="direct")
    p.add_argument("--temperature", type=float, default=1.0)
    _add_common(p, out_required=True)

    p = sub("sweep", _cmd_sweep, help="metric curves over sampling temperatures")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--inputs", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--emb", default=None)
    p.add_argument("--fluency-corpus", default=None)
    p.add_argument("--baseline", choices=["none", "pivot"], default="none")
    p.add_argument("--pivot-lang", default=None)
    p.add_argument("--temps", default="0.5,0.8,1.0,1.2,1.5")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=3)
    _add_common(p, out_required=True)

    p = sub("grad-check", _cmd_grad_check, help="finite-difference gradient check")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=200)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=16)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--d-ff", type=int, default=32)
    p.add_argument("--d-lang", type=int, default=4)
    p.add_argument("--max-len", type=int, default=32)
    _add_common(p)

    p = sub("rerun", _cmd_rerun, help="replay a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="redirect the primary output")

    return parser, registry


def _merge_config_file(argv: list[str], registry: dict) -> list[str]:
    """Expand --config FILE into flags placed before explicit ones."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv  # argparse will report the missing value
    path = argv[idx + 1]
    sub = argv[0] if argv and not argv[0].startswith("-") else None
    if sub not in registry:
        return argv
    _, subparser = registry[sub]
    known_flags = {s for a in subparser._actions for s in a.option_strings}
    injected = []
    for key, value in parse_kv(path).items():
        flag = "--" + key.replace("_", "-")
        if flag not in known_flags:
            raise ValueError(f"{path}: unknown key {key!r} for subcommand {sub!r}")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                injected.append(flag)
        else:
            injected += [flag, value]
    rest = argv[1:idx] + argv[idx + 2 :]
    return [sub] + injected + rest


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, registry = build_parser()
    try:
        argv = _merge_config_file(list(argv), registry)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    handler, subparser = registry[args.subcommand]
    if args.subcommand == "rerun":
        return handler(args)
    try:
        inputs, outputs = handler(args)
        out = getattr(args, "out", None)
        if out:
            canonical = _canonical_argv(args.subcommand, args, subparser)
            _write_manifest(out, args.subcommand, canonical, _resolved_seed(args),
                            inputs, outputs)
        return 0
    except (ValueError, KeyError, IndexError, OSError, RuntimeError,
            CorpusFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
