"""Decoder-only transformer language model with language-conditioned output.

The forward pass embeds tokens plus learned positions, runs pre-norm
self-attention/feed-forward blocks with a causal mask, applies a final
layer norm, concatenates a per-language embedding for the position being
predicted onto the hidden state, and projects to vocabulary logits. A
separate incremental path (plain numpy, no tape) serves generation and is
kept numerically equivalent to the batched path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf

from .corpus import TrainingSequence
from .optim import ParamStore
from .tensor import (
    Tensor, add, causal_attention, concat_last, cross_entropy_loss, embedding,
    gelu, layer_norm, matmul, reshape, slice_rows, transpose,
)
from .vocab import PAD_ID, Vocabulary

CHECKPOINT_MAGIC = b"PARALMCKPT"
CHECKPOINT_VERSION = 1

_LN_EPS = 1e-5
_INIT_STD = 0.02


class SequenceLengthError(ValueError):
    """Input longer than the model's positional table."""


class CheckpointError(Exception):
    pass


class CheckpointIntegrityError(CheckpointError):
    """Bad magic, truncated file, or unparseable manifest."""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class CheckpointShapeError(CheckpointError):
    """Manifest tensor directory inconsistent with its own config."""


@dataclass
class ModelConfig:
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    d_lang: int = 16
    max_len: int = 64
    vocab_size: int = 0
    n_languages: int = 0

    def __post_init__(self):
        for name in ("n_layers", "d_model", "n_heads", "d_ff", "max_len", "vocab_size", "n_languages"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_lang < 0:
            raise ValueError(f"d_lang must be non-negative, got {self.d_lang}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def expected_params(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str, bool]]:
    """Ordered parameter directory: (name, shape, init kind, weight-decay flag)."""
    d, ff = config.d_model, config.d_ff
    table: list[tuple[str, tuple[int, ...], str, bool]] = [
        ("tok_emb", (config.vocab_size, d), "normal", True),
        ("pos_emb", (config.max_len, d), "normal", True),
    ]
    if config.d_lang > 0:
        table.append(("lang_emb", (config.n_languages, config.d_lang), "normal", True))
    for i in range(config.n_layers):
        table += [
            (f"layer{i}.ln1_gain", (d,), "ones", False),
            (f"layer{i}.ln1_bias", (d,), "zeros", False),
            (f"layer{i}.wq", (d, d), "normal", True),
            (f"layer{i}.wk", (d, d), "normal", True),
            (f"layer{i}.wv", (d, d), "normal", True),
            (f"layer{i}.wo", (d, d), "normal", True),
            (f"layer{i}.ln2_gain", (d,), "ones", False),
            (f"layer{i}.ln2_bias", (d,), "zeros", False),
            (f"layer{i}.ff1", (d, ff), "normal", True),
            (f"layer{i}.ff1_bias", (ff,), "zeros", False),
            (f"layer{i}.ff2", (ff, d), "normal", True),
            (f"layer{i}.ff2_bias", (d,), "zeros", False),
        ]
    table += [
        ("final_ln_gain", (d,), "ones", False),
        ("final_ln_bias", (d,), "zeros", False),
        ("out_proj", (d + config.d_lang, config.vocab_size), "normal", True),
    ]
    return table


def predicted_lang_ids(lang_idx: np.ndarray) -> np.ndarray:
    """Language index of the token being predicted at each position.

    Logits at position i predict the token at i+1, so the conditioning
    language is the next position's; the final position repeats its own.
    """
    return np.concatenate([lang_idx[:, 1:], lang_idx[:, -1:]], axis=1)


class TransformerLM:
    def __init__(self, config: ModelConfig, params: ParamStore):
        self.config = config
        self.params = params

    def forward(self, ids: np.ndarray, lang_idx: np.ndarray) -> Tensor:
        """Logits (B, T, vocab_size) for token ids and per-position language indices."""
        ids = np.asarray(ids, dtype=np.int64)
        lang_idx = np.asarray(lang_idx, dtype=np.int64)
        if ids.ndim != 2 or lang_idx.shape != ids.shape:
            raise ValueError(f"ids and lang_idx must share a (B,T) shape, got {ids.shape} and {lang_idx.shape}")
        b, t = ids.shape
        cfg = self.config
        if t > cfg.max_len:
            raise SequenceLengthError(f"sequence length {t} exceeds max_len {cfg.max_len}")
        if lang_idx.min() < 0 or lang_idx.max() >= cfg.n_languages:
            raise ValueError(f"language index out of range [0, {cfg.n_languages})")
        p = self.params
        x = add(embedding(p["tok_emb"], ids), slice_rows(p["pos_emb"], t))
        for i in range(cfg.n_layers):
            x = add(x, self._attn_block(x, i, b, t))
            x = add(x, self._ff_block(x, i, b, t))
        h = layer_norm(x, p["final_ln_gain"], p["final_ln_bias"], _LN_EPS)
        if cfg.d_lang > 0:
            a = embedding(p["lang_emb"], predicted_lang_ids(lang_idx))
            h = concat_last(h, a)
        flat = reshape(h, (b * t, cfg.d_model + cfg.d_lang))
        return reshape(matmul(flat, p["out_proj"]), (b, t, cfg.vocab_size))

    def _attn_block(self, x: Tensor, i: int, b: int, t: int) -> Tensor:
        cfg, p = self.config, self.params
        h = layer_norm(x, p[f"layer{i}.ln1_gain"], p[f"layer{i}.ln1_bias"], _LN_EPS)
        flat = reshape(h, (b * t, cfg.d_model))

        def heads(m: Tensor) -> Tensor:
            return transpose(reshape(m, (b, t, cfg.n_heads, cfg.head_dim)), (0, 2, 1, 3))

        att = causal_attention(
            heads(matmul(flat, p[f"layer{i}.wq"])),
            heads(matmul(flat, p[f"layer{i}.wk"])),
            heads(matmul(flat, p[f"layer{i}.wv"])),
        )
        merged = reshape(transpose(att, (0, 2, 1, 3)), (b * t, cfg.d_model))
        return reshape(matmul(merged, p[f"layer{i}.wo"]), (b, t, cfg.d_model))

    def _ff_block(self, x: Tensor, i: int, b: int, t: int) -> Tensor:
        cfg, p = self.config, self.params
        h = layer_norm(x, p[f"layer{i}.ln2_gain"], p[f"layer{i}.ln2_bias"], _LN_EPS)
        flat = reshape(h, (b * t, cfg.d_model))
        inner = gelu(add(matmul(flat, p[f"layer{i}.ff1"]), p[f"layer{i}.ff1_bias"]))
        out = add(matmul(inner, p[f"layer{i}.ff2"]), p[f"layer{i}.ff2_bias"])
        return reshape(out, (b, t, cfg.d_model))

    # -- incremental decoding ------------------------------------------------

    def init_cache(self) -> "DecodeCache":
        cfg = self.config
        return DecodeCache(
            k=[np.zeros((cfg.max_len, cfg.d_model)) for _ in range(cfg.n_layers)],
            v=[np.zeros((cfg.max_len, cfg.d_model)) for _ in range(cfg.n_layers)],
        )

    def forward_step(self, cache: "DecodeCache", token_id: int, pos: int,
                     pred_lang: int, need_logits: bool = True) -> np.ndarray | None:
        """Process one token at `pos`, return the logits vector for position pos.

        `pred_lang` is the language index of the token to be predicted next.
        Numerically equivalent to forward() on the full prefix.
        """
        cfg = self.config
        if pos >= cfg.max_len:
            raise SequenceLengthError(f"position {pos} exceeds max_len {cfg.max_len}")
        p = self.params
        scale = 1.0 / np.sqrt(cfg.head_dim)
        x = p["tok_emb"].data[token_id] + p["pos_emb"].data[pos]
        for i in range(cfg.n_layers):
            h = _ln_np(x, p[f"layer{i}.ln1_gain"].data, p[f"layer{i}.ln1_bias"].data)
            q = h @ p[f"layer{i}.wq"].data
            cache.k[i][pos] = h @ p[f"layer{i}.wk"].data
            cache.v[i][pos] = h @ p[f"layer{i}.wv"].data
            att = np.empty(cfg.d_model)
            for hd in range(cfg.n_heads):
                lo, hi = hd * cfg.head_dim, (hd + 1) * cfg.head_dim
                scores = cache.k[i][: pos + 1, lo:hi] @ q[lo:hi] * scale
                w = _softmax_np(scores)
                att[lo:hi] = w @ cache.v[i][: pos + 1, lo:hi]
            x = x + att @ p[f"layer{i}.wo"].data
            h2 = _ln_np(x, p[f"layer{i}.ln2_gain"].data, p[f"layer{i}.ln2_bias"].data)
            inner = _gelu_np(h2 @ p[f"layer{i}.ff1"].data + p[f"layer{i}.ff1_bias"].data)
            x = x + inner @ p[f"layer{i}.ff2"].data + p[f"layer{i}.ff2_bias"].data
        if not need_logits:
            return None
        h = _ln_np(x, p["final_ln_gain"].data, p["final_ln_bias"].data)
        if cfg.d_lang > 0:
            h = np.concatenate([h, p["lang_emb"].data[pred_lang]])
        return h @ p["out_proj"].data


@dataclass
class DecodeCache:
    k: list[np.ndarray]
    v: list[np.ndarray]


def _ln_np(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x.mean()
    var = x.var()
    return (x - mu) / np.sqrt(var + _LN_EPS) * gain + bias


def _softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _gelu_np(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def init_model(config: ModelConfig, seed: int = 0) -> TransformerLM:
    """Fresh model: normal(0, 0.02) matrices, zero biases, unit norm gains."""
    rng = np.random.default_rng([seed])
    params = ParamStore()
    for name, shape, kind, decay in expected_params(config):
        if kind == "normal":
            data = rng.normal(0.0, _INIT_STD, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params.register(name, data, decay=decay)
    return TransformerLM(config, params)


# ---------------------------------------------------------------------------
# losses over training sequences
# ---------------------------------------------------------------------------


def batch_arrays(seqs: list[TrainingSequence], v: Vocabulary) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Pad sequences into (ids, lang_idx, shifted targets, shifted mask) arrays.

    targets[b, i] is the scored token for the logits at position i (i.e. the
    sequence position i+1); padded positions carry zero mask.
    """
    b = len(seqs)
    t = max(len(s) for s in seqs)
    ids = np.full((b, t), PAD_ID, dtype=np.int64)
    targets = np.full((b, t), PAD_ID, dtype=np.int64)
    mask = np.zeros((b, t))
    lang_idx = np.zeros((b, t), dtype=np.int64)
    for r, seq in enumerate(seqs):
        n = len(seq)
        ids[r, :n] = seq.ids
        full_targets = seq.targets()
        targets[r, : n - 1] = full_targets[1:]
        mask[r, : n - 1] = seq.loss_mask[1:]
        row_langs = [v.lang_index(c) for c in seq.langs]
        lang_idx[r, :n] = row_langs
        lang_idx[r, n:] = row_langs[-1]
    return ids, lang_idx, targets, mask


def batch_loss(m: TransformerLM, seqs: list[TrainingSequence], v: Vocabulary) -> Tensor:
    """Mean masked next-token NLL pooled over a batch of sequences."""
    if not seqs:
        raise ValueError("empty batch")
    ids, lang_idx, targets, mask = batch_arrays(seqs, v)
    logits = m.forward(ids, lang_idx)
    return cross_entropy_loss(logits, targets, mask)


def sequence_loss(m: TransformerLM, seq: TrainingSequence, v: Vocabulary) -> Tensor:
    """Mean masked next-token NLL of a single training sequence."""
    if float(seq.loss_mask[1:].sum()) <= 0:
        raise ValueError("sequence has an empty loss mask")
    return batch_loss(m, [seq], v)


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------


def save_checkpoint(m: TransformerLM, path: str) -> None:
    """Write magic, version, JSON manifest, then little-endian float32 payload.

    Values are narrowed to float32 on save and widened on load, so a model
    becomes bit-stable under save/load after one normalization pass.
    """
    directory = []
    payload = bytearray()
    for name, _t in m.params.items():
        arr = m.params[name].data
        directory.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.astype("<f4").tobytes())
    manifest = json.dumps({"config": asdict(m.config), "tensors": directory}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        f.write(payload)


def load_checkpoint(path: str) -> TransformerLM:
    with open(path, "rb") as f:
        blob = f.read()
    head = len(CHECKPOINT_MAGIC) + 4 + 8
    if len(blob) < head:
        raise CheckpointIntegrityError(f"{path}: truncated header")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointIntegrityError(f"{path}: bad magic, not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: unsupported version {version}")
    (manifest_len,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC) + 4)
    if len(blob) < head + manifest_len:
        raise CheckpointIntegrityError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[head : head + manifest_len].decode("utf-8"))
        config = ModelConfig(**manifest["config"])
        tensors = manifest["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointIntegrityError(f"{path}: unreadable manifest ({exc})") from None
    expected = expected_params(config)
    if len(tensors) != len(expected):
        raise CheckpointShapeError(
            f"{path}: manifest lists {len(tensors)} tensors, config implies {len(expected)}"
        )
    payload = blob[head + manifest_len :]
    params = ParamStore()
    for entry, (name, shape, _kind, decay) in zip(tensors, expected):
        if entry["name"] != name or tuple(entry["shape"]) != shape:
            raise CheckpointShapeError(
                f"{path}: tensor {entry['name']!r} shape {entry['shape']} does not match "
                f"config-implied {name!r} {list(shape)}"
            )
        n = int(np.prod(shape))
        start = entry["offset"]
        end = start + 4 * n
        if end > len(payload):
            raise CheckpointIntegrityError(f"{path}: truncated payload at tensor {name!r}")
        data = np.frombuffer(payload[start:end], dtype="<f4").astype(np.float64).reshape(shape)
        params.register(name, data, decay=decay)
    return TransformerLM(config, params)
