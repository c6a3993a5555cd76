"""Hot numeric kernels, numba-jitted with pure-numpy fallbacks.

Set PARALM_NUMBA=0 to force the numpy path (it is also used automatically
when numba is not importable). Both implementations are always defined so
benchmarks/bench_kernels.py can time them side by side. Within one path the
kernels are deterministic; the two paths may differ in the last few bits
because reduction order differs.
"""

import math
import os

import numpy as np


def _numba_available() -> bool:
    if os.environ.get("PARALM_NUMBA", "1") == "0":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ACTIVE = _numba_available()


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

_causal_bias_cache: dict[int, np.ndarray] = {}


def _causal_bias(t: int) -> np.ndarray:
    """(t, t) additive mask: 0 on and below the diagonal, -inf above."""
    bias = _causal_bias_cache.get(t)
    if bias is None:
        bias = np.triu(np.full((t, t), -np.inf), k=1)
        _causal_bias_cache[t] = bias
    return bias


def causal_softmax_numpy(scores: np.ndarray) -> np.ndarray:
    """Row softmax of (N, T, T) scores restricted to j <= i; zeros above."""
    n, t, _ = scores.shape
    z = scores + _causal_bias(t)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def causal_softmax_grad_numpy(w: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """Backward of causal_softmax: ds = w * (dw - sum_j w*dw)."""
    dot = (w * dw).sum(axis=-1, keepdims=True)
    return w * (dw - dot)


def scatter_add_rows_numpy(table: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    """table[ids[r]] += rows[r] with repeated ids accumulated."""
    np.add.at(table, ids, rows)


def adam_update_numpy(p, g, m, v, lr, b1, b2, eps, wd, bc1, bc2) -> None:
    """One fused Adam step with decoupled weight decay, in place on 1-D views."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + eps)) + (lr * wd) * p


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_ACTIVE:
    from numba import njit

    @njit(cache=True)
    def _causal_softmax_nb(scores):
        n, t, _ = scores.shape
        out = np.zeros_like(scores)
        for a in range(n):
            for i in range(t):
                hi = scores[a, i, 0]
                for j in range(1, i + 1):
                    if scores[a, i, j] > hi:
                        hi = scores[a, i, j]
                s = 0.0
                for j in range(i + 1):
                    e = math.exp(scores[a, i, j] - hi)
                    out[a, i, j] = e
                    s += e
                inv = 1.0 / s
                for j in range(i + 1):
                    out[a, i, j] *= inv
        return out

    @njit(cache=True)
    def _causal_softmax_grad_nb(w, dw):
        n, t, _ = w.shape
        ds = np.zeros_like(w)
        for a in range(n):
            for i in range(t):
                dot = 0.0
                for j in range(i + 1):
                    dot += w[a, i, j] * dw[a, i, j]
                for j in range(i + 1):
                    ds[a, i, j] = w[a, i, j] * (dw[a, i, j] - dot)
        return ds

    @njit(cache=True)
    def _scatter_add_rows_nb(table, ids, rows):
        n, d = rows.shape
        for r in range(n):
            t = ids[r]
            for c in range(d):
                table[t, c] += rows[r, c]

    @njit(cache=True)
    def _adam_update_nb(p, g, m, v, lr, b1, b2, eps, wd, bc1, bc2):
        for i in range(p.size):
            gi = g[i]
            m[i] = b1 * m[i] + (1.0 - b1) * gi
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
            mh = m[i] / bc1
            vh = v[i] / bc2
            p[i] = p[i] - lr * (mh / (math.sqrt(vh) + eps)) - lr * wd * p[i]

    causal_softmax_impl = _causal_softmax_nb
    causal_softmax_grad_impl = _causal_softmax_grad_nb
    scatter_add_rows = _scatter_add_rows_nb
    adam_update = _adam_update_nb
else:
    causal_softmax_impl = causal_softmax_numpy
    causal_softmax_grad_impl = causal_softmax_grad_numpy
    scatter_add_rows = scatter_add_rows_numpy
    adam_update = adam_update_numpy


# ---------------------------------------------------------------------------
# shape adapters used by the autodiff ops
# ---------------------------------------------------------------------------


def causal_softmax(scores: np.ndarray) -> np.ndarray:
    """Masked softmax over (B, H, T, T) attention scores."""
    b, h, t, _ = scores.shape
    flat = np.ascontiguousarray(scores).reshape(b * h, t, t)
    return causal_softmax_impl(flat).reshape(b, h, t, t)


def causal_softmax_grad(w: np.ndarray, dw: np.ndarray) -> np.ndarray:
    b, h, t, _ = w.shape
    wf = np.ascontiguousarray(w).reshape(b * h, t, t)
    df = np.ascontiguousarray(dw).reshape(b * h, t, t)
    return causal_softmax_grad_impl(wf, df).reshape(b, h, t, t)


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs so timings exclude compile cost."""
    s = np.zeros((1, 2, 2))
    w = causal_softmax_impl(s)
    causal_softmax_grad_impl(w, s)
    tbl = np.zeros((3, 2))
    scatter_add_rows(tbl, np.zeros(2, dtype=np.int64), np.ones((2, 2)))
    one = np.ones(4)
    adam_update(one.copy(), one, one.copy(), one.copy(), 1e-3, 0.9, 0.999, 1e-8, 0.0, 0.1, 0.001)
