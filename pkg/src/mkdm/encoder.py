"""Bidirectional transformer encoder (post-layer-norm residual blocks).

Maps summed input embeddings to contextual states; the [CLS] state at
position 0 feeds the classification heads. Operations accept a single
[L,h] sequence or a batch [B,L,h].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .params import normal_param, ones_param, zeros_param
from .tensor import Tensor

MASK_BIAS = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 3
    hidden: int = 128
    heads: int = 4
    ffn: int = 512
    dropout: float = 0.1
    max_len: int = 64

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        for name in ("hidden", "heads", "ffn", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.hidden % self.heads != 0:
            raise ConfigError(
                f"hidden ({self.hidden}) must be divisible by heads ({self.heads})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self):
        return self.hidden // self.heads

    def param_count(self):
        """Elements in the encoder stack: per layer 4 attention projections
        with biases, two feed-forward layers, two layer norms."""
        h, f = self.hidden, self.ffn
        per_layer = 4 * (h * h + h) + (h * f + f) + (f * h + h) + 4 * h
        return self.layers * per_layer

    @classmethod
    def paper_scale(cls, layers=3, dropout=0.1):
        """BERT-base dimensions; hours-scale on a desk CPU, not the default."""
        return cls(layers=layers, hidden=768, heads=12, ffn=3072,
                   dropout=dropout, max_len=512)


@dataclass
class LayerWeights:
    """One encoder block's trainable tensors."""

    wq: T.Parameter
    bq: T.Parameter
    wk: T.Parameter
    bk: T.Parameter
    wv: T.Parameter
    bv: T.Parameter
    wo: T.Parameter
    bo: T.Parameter
    ln1_g: T.Parameter
    ln1_b: T.Parameter
    w1: T.Parameter
    b1: T.Parameter
    w2: T.Parameter
    b2: T.Parameter
    ln2_g: T.Parameter
    ln2_b: T.Parameter

    @classmethod
    def create(cls, prefix, config, seed):
        h, f = config.hidden, config.ffn

        def mat(name, shape):
            return normal_param(f"{prefix}.{name}", shape, seed)

        return cls(
            wq=mat("wq", (h, h)), bq=zeros_param(f"{prefix}.bq", (h,)),
            wk=mat("wk", (h, h)), bk=zeros_param(f"{prefix}.bk", (h,)),
            wv=mat("wv", (h, h)), bv=zeros_param(f"{prefix}.bv", (h,)),
            wo=mat("wo", (h, h)), bo=zeros_param(f"{prefix}.bo", (h,)),
            ln1_g=ones_param(f"{prefix}.ln1_g", (h,)),
            ln1_b=zeros_param(f"{prefix}.ln1_b", (h,)),
            w1=mat("w1", (h, f)), b1=zeros_param(f"{prefix}.b1", (f,)),
            w2=mat("w2", (f, h)), b2=zeros_param(f"{prefix}.b2", (h,)),
            ln2_g=ones_param(f"{prefix}.ln2_g", (h,)),
            ln2_b=zeros_param(f"{prefix}.ln2_b", (h,)),
        )

    def parameters(self):
        return [getattr(self, f.name) for f in fields(self)]


def _promote(h_in, mask):
    """Normalize to a [B,L,h] Tensor and a [B,L] float mask array."""
    squeezed = h_in.ndim == 2
    if squeezed:
        h_in = T.reshape(h_in, (1,) + h_in.shape)
    mask = np.asarray(mask, dtype=h_in.dtype)
    if mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != h_in.shape[:2]:
        raise ContractError(
            f"mask shape {mask.shape} does not match sequence shape {h_in.shape[:2]}"
        )
    return h_in, mask, squeezed


def _mask_bias(mask, dtype):
    if (mask.sum(axis=-1) == 0).any():
        raise ContractError("attention mask has a fully padded sequence")
    return Tensor(((1.0 - mask) * MASK_BIAS)[:, None, None, :].astype(dtype))


def self_attention(h_in, weights, mask, config, train=False, rng=None):
    """Multi-head scaled dot-product attention with additive masking.

    Padded key positions get a -1e9 score bias, which underflows to an
    exact zero attention weight after the max-subtracted softmax.
    """
    h_in, mask, squeezed = _promote(h_in, mask)
    b, length, h = h_in.shape
    a, d = config.heads, config.head_dim

    def project(w, bias):
        y = T.add(T.matmul(h_in, w), bias)
        y = T.reshape(y, (b, length, a, d))
        return T.transpose(y, (0, 2, 1, 3))

    q = project(weights.wq, weights.bq)
    k = project(weights.wk, weights.bk)
    v = project(weights.wv, weights.bv)
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    scores = T.add(scores, _mask_bias(mask, h_in.dtype))
    attn = T.softmax_rows(scores)
    ctx = T.matmul(attn, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, length, h))
    out = T.add(T.matmul(ctx, weights.wo), weights.bo)
    if squeezed:
        out = T.reshape(out, (length, h))
    return out


def encoder_block(h_in, weights, mask, config, train=False, rng=None):
    """Post-layer-norm block: attention and feed-forward sublayers, each
    wrapped as LayerNorm(x + Dropout(sublayer(x)))."""
    attn = self_attention(h_in, weights, mask, config, train=train, rng=rng)
    attn = T.dropout(attn, config.dropout, rng, train)
    h1 = T.layer_norm(T.add(h_in, attn), weights.ln1_g, weights.ln1_b)
    ff = T.gelu(T.add(T.matmul(h1, weights.w1), weights.b1))
    ff = T.add(T.matmul(ff, weights.w2), weights.b2)
    ff = T.dropout(ff, config.dropout, rng, train)
    return T.layer_norm(T.add(h1, ff), weights.ln2_g, weights.ln2_b)


def encode(h_e, layer_stack, mask, config, train=False, rng=None):
    """Run the full stack over embedded input H_e."""
    if len(layer_stack) != config.layers:
        raise ContractError(
            f"config says {config.layers} layers but {len(layer_stack)} weight sets given"
        )
    h = h_e
    for weights in layer_stack:
        h = encoder_block(h, weights, mask, config, train=train, rng=rng)
    return h


def extract_cls(h_s):
    """First-position state: [B,h] from [B,L,h], or [h] from [L,h]."""
    if isinstance(h_s, Tensor):
        if h_s.ndim == 3:
            return T.select_position(h_s, 0)
        width = h_s.shape[-1]
        return T.reshape(T.select_position(T.reshape(h_s, (1,) + h_s.shape), 0), (width,))
    return np.asarray(h_s)[..., 0, :]
