"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation appends a node to an implicit tape;
`backward` walks the tape once in reverse topological order and accumulates
exact gradients into the participating leaves. All math is float64. The
reduction-heavy inner loops (causal attention softmax, embedding
scatter-add) are delegated to `paralm._kernels`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from . import _kernels as K

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DimensionError(ValueError):
    """Operand shapes violate an operation's contract."""


class GraphError(ValueError):
    """Autodiff misuse, e.g. backward from a non-scalar value."""


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    A tensor whose value was produced by an operation on gradient-requiring
    inputs remembers its parents and a backward closure; constants carry
    neither, so inference builds no tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor the scalar `loss` depends on."""
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))
    if out.requires_grad:
        def _bwd(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        out._backward = _bwd
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))
    if out.requires_grad:
        def _bwd(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))
        out._backward = _bwd
    return out


def sum_all(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(t.data.sum(), parents=(t,))
    if out.requires_grad:
        def _bwd(g):
            _accum(t, np.full_like(t.data, float(g)))
        out._backward = _bwd
    return out


def reshape(t: Tensor, shape) -> Tensor:
    in_shape = t.data.shape
    out = Tensor(t.data.reshape(shape), parents=(t,))
    if out.requires_grad:
        def _bwd(g):
            _accum(t, g.reshape(in_shape))
        out._backward = _bwd
    return out


def transpose(t: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(np.transpose(t.data, axes), parents=(t,))
    if out.requires_grad:
        def _bwd(g):
            _accum(t, np.transpose(g, inverse))
        out._backward = _bwd
    return out


def slice_rows(t: Tensor, n: int) -> Tensor:
    """First n rows of a rank >= 1 tensor."""
    out = Tensor(t.data[:n], parents=(t,))
    if out.requires_grad:
        def _bwd(g):
            full = np.zeros_like(t.data)
            full[:n] = g
            _accum(t, full)
        out._backward = _bwd
    return out


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise DimensionError(
            f"concat_last requires matching leading shapes, got {a.data.shape} and {b.data.shape}"
        )
    split = a.data.shape[-1]
    out = Tensor(np.concatenate([a.data, b.data], axis=-1), parents=(a, b))
    if out.requires_grad:
        def _bwd(g):
            _accum(a, g[..., :split])
            _accum(b, g[..., split:])
        out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# linear algebra and neural-net ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects rank-2 operands, got shapes {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, parents=(a, b))
    if out.requires_grad:
        def _bwd(g):
            if a.requires_grad:
                _accum(a, g @ b.data.T)
            if b.requires_grad:
                _accum(b, a.data.T @ g)
        out._backward = _bwd
    return out


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtracted)."""
    x = _as_tensor(x)
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.data.shape}")
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p, parents=(x,))
    if out.requires_grad:
        def _bwd(g):
            dot = (g * p).sum(axis=axis, keepdims=True)
            _accum(x, p * (g - dot))
        out._backward = _bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.data.shape} and {bias.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xh = (x.data - mu) * inv_std
    out = Tensor(xh * gain.data + bias.data, parents=(x, gain, bias))
    if out.requires_grad:
        def _bwd(g):
            if gain.requires_grad:
                _accum(gain, (g * xh).reshape(-1, d).sum(axis=0))
            if bias.requires_grad:
                _accum(bias, g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                dxh = g * gain.data
                _accum(x, inv_std * (dxh - dxh.mean(axis=-1, keepdims=True)
                                     - xh * (dxh * xh).mean(axis=-1, keepdims=True)))
        out._backward = _bwd
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact erf-form GELU."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = Tensor(x.data * cdf, parents=(x,))
    if out.requires_grad:
        def _bwd(g):
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
            _accum(x, g * (cdf + x.data * pdf))
        out._backward = _bwd
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of `table` by integer ids; backward scatter-adds."""
    ids = np.asarray(ids)
    out = Tensor(table.data[ids], parents=(table,))
    if out.requires_grad:
        def _bwd(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            rows = np.ascontiguousarray(g.reshape(-1, table.data.shape[-1]))
            K.scatter_add_rows(table.grad, ids.ravel().astype(np.int64), rows)
        out._backward = _bwd
    return out


def causal_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention over (B, H, T, dh) with a causal mask.

    Position i attends to positions <= i only; the softmax/mask fusion and
    its backward run through the kernel module.
    """
    if not (q.data.shape == k.data.shape == v.data.shape) or q.data.ndim != 4:
        raise DimensionError(
            f"causal_attention expects equal (B,H,T,dh) shapes, got "
            f"{q.data.shape}, {k.data.shape}, {v.data.shape}"
        )
    scale = 1.0 / np.sqrt(q.data.shape[-1])
    scores = (q.data @ np.swapaxes(k.data, -1, -2)) * scale
    w = K.causal_softmax(scores)
    out = Tensor(w @ v.data, parents=(q, k, v))
    if out.requires_grad:
        def _bwd(g):
            dw = g @ np.swapaxes(v.data, -1, -2)
            ds = K.causal_softmax_grad(w, dw) * scale
            if q.requires_grad:
                _accum(q, ds @ k.data)
            if k.requires_grad:
                _accum(k, np.swapaxes(ds, -1, -2) @ q.data)
            if v.requires_grad:
                _accum(v, np.swapaxes(w, -1, -2) @ g)
        out._backward = _bwd
    return out


def cross_entropy_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean masked negative log-likelihood over (B, T, V) logits.

    `targets` holds token ids (B, T); `mask` marks the positions whose
    prediction counts. The result is sum(masked nll) / sum(mask).
    """
    if logits.data.ndim != 3:
        raise DimensionError(f"cross_entropy_loss expects (B,T,V) logits, got {logits.data.shape}")
    b, t, vsize = logits.data.shape
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    if targets.shape != (b, t) or mask.shape != (b, t):
        raise DimensionError(
            f"targets/mask must have shape {(b, t)}, got {targets.shape} and {mask.shape}"
        )
    if targets.min() < 0 or targets.max() >= vsize:
        raise IndexError(
            f"target ids must lie in [0, {vsize}), got range "
            f"[{int(targets.min())}, {int(targets.max())}]"
        )
    denom = mask.sum()
    if denom <= 0:
        raise ValueError("degenerate batch: loss mask selects no positions")
    m = logits.data.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(logits.data - m).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logits.data, targets[..., None], axis=-1)[..., 0]
    nll = lse[..., 0] - picked
    out = Tensor((nll * mask).sum() / denom, parents=(logits,))
    if out.requires_grad:
        bi, ti = np.meshgrid(np.arange(b), np.arange(t), indexing="ij")
        def _bwd(g):
            p = np.exp(logits.data - lse)
            p[bi, ti, targets] -= 1.0
            p *= (mask / denom * float(g))[..., None]
            _accum(logits, p)
        out._backward = _bwd
    return out
