"""Masked transformer-encoder stack and multi-layer fusion.

Layer wiring, deliberately as specified rather than textbook BERT: the
feed-forward residual connects back to the self-attention output S, not to
the attention block output A.

    S = masked_softmax(Q(x) K(x)^T / divisor) V(x)      (per head, concat)
    A = LayerNorm(D_a(S) + x)
    B = LayerNorm(D_c(GELU(D_b(A))) + S)

Layers cascade (layer k consumes layer k-1's output). The fused clip
representation averages the position-embedded input with every layer's
output and divides by (num_layers + 1); masked rows are zeroed so padded
frames cannot leak into anything downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, ShapeMismatchError
from .numerics import (
    Tensor,
    dropout,
    gelu,
    layer_norm,
    leading_rows,
    linear,
    masked_softmax,
    matmul,
    parameter,
    permute,
    reshape,
)


@dataclass
class StackConfig:
    num_layers: int = 16           # encoder layers
    embed_dim: int = 1024
    num_heads: int | None = None   # defaults to num_layers
    ff_dim: int = 8192             # intermediate dense width
    max_seq: int = 128
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.num_heads is None:
            self.num_heads = self.num_layers
        if self.num_layers < 1 or self.ff_dim < 1:
            raise ConfigurationError("num_layers and ff_dim must be >= 1")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def attention_divisor(self) -> float:
        # sqrt(embed_dim / num_layers); equals sqrt(head_dim) at the default
        # heads == layers
        return math.sqrt(self.embed_dim / self.num_layers)


@dataclass
class EmbeddingSequence:
    """Per-frame embeddings plus the live/padded mask."""

    values: Tensor                 # (num_frames, embed_dim)
    mask: np.ndarray               # (num_frames,) bool, True = live

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape[0] != self.mask.shape[0]:
            raise ShapeMismatchError(
                f"values {self.values.shape} vs mask {self.mask.shape}"
            )
        if not self.mask.any():
            raise DegenerateInputError("EmbeddingSequence with no live position")


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor


@dataclass
class NormParams:
    gain: Tensor
    bias: Tensor


@dataclass
class LayerParams:
    attn_query: LinearParams
    attn_key: LinearParams
    attn_value: LinearParams
    attn_out: LinearParams        # projection applied to S inside the attention block
    ff_in: LinearParams           # embed_dim -> ff_dim
    ff_out: LinearParams          # ff_dim -> embed_dim
    norm_attn: NormParams
    norm_ff: NormParams


@dataclass
class StackParams:
    layers: list[LayerParams] = field(default_factory=list)
    pos_emb: Tensor = None        # (max_seq, embed_dim), learned


def _init_linear(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> LinearParams:
    bound = 1.0 / math.sqrt(d_in)
    return LinearParams(
        w=parameter(rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)),
        b=parameter(rng.uniform(-bound, bound, size=(d_out,)).astype(dtype)),
    )


def _init_norm(dim: int, dtype) -> NormParams:
    return NormParams(gain=parameter(np.ones(dim, dtype=dtype)),
                      bias=parameter(np.zeros(dim, dtype=dtype)))


def init_stack(config: StackConfig, rng: np.random.Generator, dtype=np.float64) -> StackParams:
    d, f = config.embed_dim, config.ff_dim
    layers = [
        LayerParams(
            attn_query=_init_linear(rng, d, d, dtype),
            attn_key=_init_linear(rng, d, d, dtype),
            attn_value=_init_linear(rng, d, d, dtype),
            attn_out=_init_linear(rng, d, d, dtype),
            ff_in=_init_linear(rng, d, f, dtype),
            ff_out=_init_linear(rng, f, d, dtype),
            norm_attn=_init_norm(d, dtype),
            norm_ff=_init_norm(d, dtype),
        )
        for _ in range(config.num_layers)
    ]
    pos = parameter((0.02 * rng.standard_normal((config.max_seq, d))).astype(dtype))
    return StackParams(layers=layers, pos_emb=pos)


def self_attention(values: Tensor, mask: np.ndarray, layer: LayerParams,
                   config: StackConfig) -> Tensor:
    """Multi-head masked self-attention output S (before any projection)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateInputError("self_attention: every key position is masked")
    n, d = values.shape
    h, hd = config.num_heads, config.head_dim

    def split(t):  # (n, d) -> (heads, n, head_dim)
        return permute(reshape(t, (n, h, hd)), (1, 0, 2))

    q = split(linear(values, layer.attn_query.w, layer.attn_query.b))
    k = split(linear(values, layer.attn_key.w, layer.attn_key.b))
    v = split(linear(values, layer.attn_value.w, layer.attn_value.b))
    scores = matmul(q, permute(k, (0, 2, 1))) / config.attention_divisor
    probs = masked_softmax(scores, mask)          # masked keys get exactly 0
    ctx = matmul(probs, v)                        # (heads, n, head_dim)
    return reshape(permute(ctx, (1, 0, 2)), (n, d))


def _attention_block_from_s(s: Tensor, values: Tensor, layer: LayerParams,
                            config: StackConfig, training: bool,
                            rng: np.random.Generator | None) -> Tensor:
    proj = dropout(linear(s, layer.attn_out.w, layer.attn_out.b),
                   config.dropout_p, rng, training)
    return layer_norm(proj + values, layer.norm_attn.gain, layer.norm_attn.bias)


def attention_block(values: Tensor, mask: np.ndarray, layer: LayerParams,
                    config: StackConfig, training: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
    """A = LayerNorm(D_a(S) + input), the residual adding the block input."""
    s = self_attention(values, mask, layer, config)
    return _attention_block_from_s(s, values, layer, config, training, rng)


def encoder_layer(values: Tensor, mask: np.ndarray, layer: LayerParams,
                  config: StackConfig, training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """B = LayerNorm(D_c(GELU(D_b(A))) + S); the residual comes from S."""
    s = self_attention(values, mask, layer, config)
    a = _attention_block_from_s(s, values, layer, config, training, rng)
    hidden = gelu(linear(a, layer.ff_in.w, layer.ff_in.b))
    ff = dropout(linear(hidden, layer.ff_out.w, layer.ff_out.b),
                 config.dropout_p, rng, training)
    return layer_norm(ff + s, layer.norm_ff.gain, layer.norm_ff.bias)


def fuse_layer_outputs(pos_values: Tensor, layer_outputs: list[Tensor],
                       mask: np.ndarray) -> Tensor:
    """Average input and all layer outputs, then zero masked rows."""
    total = pos_values
    for out in layer_outputs:
        total = total + out
    fused = total / float(len(layer_outputs) + 1)
    col = np.asarray(mask, dtype=fused.dtype).reshape(-1, 1)
    return fused * col


def run_stack(seq: EmbeddingSequence, params: StackParams, config: StackConfig,
              training: bool = False, rng: np.random.Generator | None = None
              ) -> tuple[list[Tensor], Tensor]:
    """Add positional embeddings, cascade all layers, return (outputs, fused)."""
    n = seq.values.shape[0]
    if n > config.max_seq:
        raise ShapeMismatchError(
            f"sequence length {n} exceeds max_seq {config.max_seq}"
        )
    if len(params.layers) != config.num_layers:
        raise ConfigurationError(
            f"stack has {len(params.layers)} layers, config wants {config.num_layers}"
        )
    x = seq.values + leading_rows(params.pos_emb, n)
    pos_values = x
    outputs: list[Tensor] = []
    for layer in params.layers:
        x = encoder_layer(x, seq.mask, layer, config, training, rng)
        outputs.append(x)
    fused = fuse_layer_outputs(pos_values, outputs, seq.mask)
    return outputs, fused


def stack_named_params(params: StackParams) -> list[tuple[str, Tensor]]:
    out = [("stack.pos_emb", params.pos_emb)]
    for i, lp in enumerate(params.layers):
        for part in ("attn_query", "attn_key", "attn_value", "attn_out", "ff_in", "ff_out"):
            lin = getattr(lp, part)
            out.append((f"stack.layer{i}.{part}.w", lin.w))
            out.append((f"stack.layer{i}.{part}.b", lin.b))
        for part in ("norm_attn", "norm_ff"):
            nm = getattr(lp, part)
            out.append((f"stack.layer{i}.{part}.gain", nm.gain))
            out.append((f"stack.layer{i}.{part}.bias", nm.bias))
    return out


def stack_param_count(config: StackConfig) -> int:
    """Closed-form parameter count of the stack (including positional table)."""
    d, f = config.embed_dim, config.ff_dim
    per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
    return config.num_layers * per_layer + config.max_seq * d
