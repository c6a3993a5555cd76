"""Time the numba kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py
The numba column reads "n/a" when numba is unavailable or disabled via
PARALM_NUMBA=0. A small end-to-end training-step timing is included since
the kernels only matter in context.
"""

import time

import numpy as np

from paralm import _kernels as K


def _time(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rows = []
    rng = np.random.default_rng(0)

    scores = rng.normal(size=(64, 32, 32))
    w = K.causal_softmax_numpy(scores)
    dw = rng.normal(size=scores.shape)
    rows.append(("causal_softmax (64x32x32)",
                 _time(K.causal_softmax_numpy, scores),
                 _time(K.causal_softmax_impl, scores) if K.NUMBA_ACTIVE else None))
    rows.append(("causal_softmax_grad (64x32x32)",
                 _time(K.causal_softmax_grad_numpy, w, dw),
                 _time(K.causal_softmax_grad_impl, w, dw) if K.NUMBA_ACTIVE else None))

    table = np.zeros((512, 128))
    ids = rng.integers(0, 512, size=8192).astype(np.int64)
    vals = rng.normal(size=(8192, 128))
    rows.append(("scatter_add_rows (8192x128)",
                 _time(K.scatter_add_rows_numpy, table, ids, vals),
                 _time(K.scatter_add_rows, table, ids, vals) if K.NUMBA_ACTIVE else None))

    n = 1 << 20
    p, g = rng.normal(size=n), rng.normal(size=n)
    m, v = np.zeros(n), np.zeros(n)
    adam_args = (1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001)
    rows.append(("adam_update (1M params)",
                 _time(K.adam_update_numpy, p.copy(), g, m.copy(), v.copy(), *adam_args),
                 _time(K.adam_update, p.copy(), g, m.copy(), v.copy(), *adam_args)
                 if K.NUMBA_ACTIVE else None))
    return rows


def bench_train_step():
    from paralm.corpus import all_cross_directions, assemble_bilingual, gen_synthetic_corpus
    from paralm.model import ModelConfig, batch_loss, init_model
    from paralm.optim import AdamConfig, adam_step
    from paralm.synthlang import SyntheticLangSpec
    from paralm.tensor import backward
    from paralm.vocab import build_vocab

    spec = SyntheticLangSpec(n_concepts=30, synonyms_per_concept=2,
                             languages=("aq", "be", "cu", "do"), seed=0)
    pairs = gen_synthetic_corpus(spec, 16, (5, 9), all_cross_directions(spec.languages))
    v = build_vocab((" ".join(p.src_tokens + p.tgt_tokens) for p in pairs),
                    spec.languages)
    m = init_model(ModelConfig(n_layers=3, d_model=64, n_heads=4, d_ff=256,
                               d_lang=8, max_len=48, vocab_size=v.size,
                               n_languages=len(v.languages)), seed=0)
    batch = [assemble_bilingual(p, None, v) for p in pairs]
    cfg = AdamConfig(learning_rate=1e-3)

    def step():
        loss = batch_loss(m, batch, v)
        backward(loss)
        adam_step(m.params, cfg)

    step()  # warm caches / JIT
    return _time(step, repeat=5)


def main():
    if K.NUMBA_ACTIVE:
        K.warmup()
        mode = "numba"
    else:
        mode = "numpy fallback (numba off)"
    print(f"kernel path: {mode}\n")
    print(f"{'kernel':40s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, t_np, t_nb in bench_kernels():
        if t_nb is None:
            print(f"{name:40s} {t_np * 1e3:9.3f} ms {'n/a':>12s} {'n/a':>9s}")
        else:
            print(f"{name:40s} {t_np * 1e3:9.3f} ms {t_nb * 1e3:9.3f} ms {t_np / t_nb:8.2f}x")
    print(f"\nfull training step (batch 16, 3 layers, d=64): "
          f"{bench_train_step() * 1e3:.1f} ms on the {mode} path")


if __name__ == "__main__":
    main()
