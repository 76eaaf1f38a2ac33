"""Output branches on top of the fused clip representation.

The systole/diastole (SD) branch labels every frame, either with a smooth
signal in (-1, 1) or with per-frame class probabilities over
{transition=0, ED=1, ES=2}. The ejection-fraction (EF) branch reduces every
live frame to a scalar, averages, and squashes with a sigmoid OUTSIDE the
mean, so one clip yields one value in (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .numerics import (
    Tensor,
    layer_norm,
    linear,
    masked_softmax,
    parameter,
    permute,
    reduce_sum,
    reshape,
    sigmoid,
    tanh,
)
from .transformer import LinearParams, NormParams

CLASS_TRANSITION, CLASS_ED, CLASS_ES = 0, 1, 2


@dataclass
class SDHeadParams:
    lin1: LinearParams            # embed_dim -> embed_dim/2
    norm1: NormParams
    lin2: LinearParams            # embed_dim/2 -> embed_dim/4
    norm2: NormParams
    lin3: LinearParams            # embed_dim/4 -> 1 (regression) or 3 (classification)


@dataclass
class EFHeadParams:
    lin1: LinearParams            # embed_dim -> embed_dim/2
    norm: NormParams
    lin2: LinearParams            # embed_dim/2 -> 1


def _init_linear(rng, d_in, d_out, dtype) -> LinearParams:
    bound = 1.0 / math.sqrt(d_in)
    return LinearParams(
        w=parameter(rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)),
        b=parameter(rng.uniform(-bound, bound, size=(d_out,)).astype(dtype)),
    )


def _init_norm(dim, dtype) -> NormParams:
    return NormParams(gain=parameter(np.ones(dim, dtype=dtype)),
                      bias=parameter(np.zeros(dim, dtype=dtype)))


def init_sd_head(embed_dim: int, sd_mode: str, rng: np.random.Generator,
                 dtype=np.float64) -> SDHeadParams:
    h1, h2 = embed_dim // 2, embed_dim // 4
    out_dim = 3 if sd_mode == "classification" else 1
    return SDHeadParams(
        lin1=_init_linear(rng, embed_dim, h1, dtype),
        norm1=_init_norm(h1, dtype),
        lin2=_init_linear(rng, h1, h2, dtype),
        norm2=_init_norm(h2, dtype),
        lin3=_init_linear(rng, h2, out_dim, dtype),
    )


def init_ef_head(embed_dim: int, rng: np.random.Generator, dtype=np.float64) -> EFHeadParams:
    h = embed_dim // 2
    return EFHeadParams(
        lin1=_init_linear(rng, embed_dim, h, dtype),
        norm=_init_norm(h, dtype),
        lin2=_init_linear(rng, h, 1, dtype),
    )


def _sd_trunk(fused: Tensor, params: SDHeadParams) -> Tensor:
    x = layer_norm(linear(fused, params.lin1.w, params.lin1.b),
                   params.norm1.gain, params.norm1.bias)
    x = layer_norm(linear(x, params.lin2.w, params.lin2.b),
                   params.norm2.gain, params.norm2.bias)
    return linear(x, params.lin3.w, params.lin3.b)


def sd_regress(fused: Tensor, params: SDHeadParams) -> Tensor:
    """Per-frame signal in (-1, 1); shape (num_frames,). Frames share weights."""
    logits = _sd_trunk(fused, params)          # (n, 1)
    return tanh(reshape(logits, (fused.shape[0],)))


def sd_classify(fused: Tensor, params: SDHeadParams) -> Tensor:
    """Per-frame class probabilities, shape (3, num_frames); columns sum to 1."""
    logits = _sd_trunk(fused, params)          # (n, 3)
    probs = masked_softmax(logits, np.ones(3, dtype=bool))
    return permute(probs, (1, 0))


def ef_regress(fused: Tensor, mask: np.ndarray, params: EFHeadParams) -> Tensor:
    """Scalar EF estimate in (0, 1): sigmoid of the mean per-live-frame score."""
    mask = np.asarray(mask, dtype=bool)
    live = int(mask.sum())
    if live == 0:
        raise DegenerateInputError("ef_regress: no live frames")
    x = layer_norm(linear(fused, params.lin1.w, params.lin1.b),
                   params.norm.gain, params.norm.bias)
    scores = reshape(linear(x, params.lin2.w, params.lin2.b), (fused.shape[0],))
    weights = mask.astype(fused.dtype)         # exclude padded frames from the mean
    mean = reduce_sum(scores * weights) / float(live)
    return sigmoid(mean)


def sd_head_named_params(params: SDHeadParams) -> list[tuple[str, Tensor]]:
    return [
        ("sd_head.lin1.w", params.lin1.w), ("sd_head.lin1.b", params.lin1.b),
        ("sd_head.norm1.gain", params.norm1.gain), ("sd_head.norm1.bias", params.norm1.bias),
        ("sd_head.lin2.w", params.lin2.w), ("sd_head.lin2.b", params.lin2.b),
        ("sd_head.norm2.gain", params.norm2.gain), ("sd_head.norm2.bias", params.norm2.bias),
        ("sd_head.lin3.w", params.lin3.w), ("sd_head.lin3.b", params.lin3.b),
    ]


def ef_head_named_params(params: EFHeadParams) -> list[tuple[str, Tensor]]:
    return [
        ("ef_head.lin1.w", params.lin1.w), ("ef_head.lin1.b", params.lin1.b),
        ("ef_head.norm.gain", params.norm.gain), ("ef_head.norm.bias", params.norm.bias),
        ("ef_head.lin2.w", params.lin2.w), ("ef_head.lin2.b", params.lin2.b),
    ]
