"""Residual convolutional frame encoder.

Each grayscale frame is padded to a square working size, run through a small
residual pyramid (3x3 stem, then per stage a two-conv residual block followed
by a stride-2 downsampling conv that doubles the channel count), flattened,
and projected to the embedding width. Frames are encoded independently; all
temporal mixing happens later in the attention stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, ShapeMismatchError
from .numerics import Tensor, conv2d, dropout, gelu, linear, parameter, reshape


@dataclass
class EncoderConfig:
    input_size: int = 128          # square working size after padding
    stem_channels: int = 8         # 8 at desk scale, 32 at full scale
    num_stages: int = 4
    embed_dim: int = 1024
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.input_size % (1 << self.num_stages) != 0:
            raise ConfigurationError(
                f"input_size {self.input_size} not divisible by 2^{self.num_stages}"
            )
        if self.embed_dim < 1:
            raise ConfigurationError("embed_dim must be >= 1")

    @property
    def stage_channels(self) -> list[int]:
        return [self.stem_channels << s for s in range(self.num_stages + 1)]

    @property
    def flat_dim(self) -> int:
        side = self.input_size >> self.num_stages
        return side * side * self.stage_channels[-1]


@dataclass
class ConvParams:
    w: Tensor
    b: Tensor


@dataclass
class StageParams:
    conv_a: ConvParams
    conv_b: ConvParams
    down: ConvParams


@dataclass
class EncoderParams:
    stem: ConvParams
    stages: list[StageParams] = field(default_factory=list)
    out_w: Tensor = None
    out_b: Tensor = None


def _init_conv(rng: np.random.Generator, c_out: int, c_in: int, k: int, dtype) -> ConvParams:
    bound = 1.0 / np.sqrt(c_in * k * k)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype)
    b = rng.uniform(-bound, bound, size=(c_out,)).astype(dtype)
    return ConvParams(parameter(w), parameter(b))


def init_encoder(config: EncoderConfig, rng: np.random.Generator,
                 dtype=np.float64) -> EncoderParams:
    """Uniform fan-in init for all convolutions and the output projection."""
    chans = config.stage_channels
    stem = _init_conv(rng, chans[0], 1, 3, dtype)
    stages = []
    for s in range(config.num_stages):
        c = chans[s]
        stages.append(StageParams(
            conv_a=_init_conv(rng, c, c, 3, dtype),
            conv_b=_init_conv(rng, c, c, 3, dtype),
            down=_init_conv(rng, chans[s + 1], c, 3, dtype),
        ))
    bound = 1.0 / np.sqrt(config.flat_dim)
    out_w = parameter(rng.uniform(-bound, bound,
                                  size=(config.flat_dim, config.embed_dim)).astype(dtype))
    out_b = parameter(rng.uniform(-bound, bound, size=(config.embed_dim,)).astype(dtype))
    return EncoderParams(stem=stem, stages=stages, out_w=out_w, out_b=out_b)


def pad_frame(frame: np.ndarray, target: int) -> np.ndarray:
    """Zero-pad a frame to target x target, centered.

    Odd leftovers put the extra pixel on the bottom/right. Content larger
    than the target is an error.
    """
    frame = np.asarray(frame)
    h, w = frame.shape
    if h > target or w > target:
        raise ShapeMismatchError(
            f"pad_frame: frame {h}x{w} exceeds target {target}x{target}"
        )
    top = (target - h) // 2
    left = (target - w) // 2
    return np.pad(frame, ((top, target - h - top), (left, target - w - left)))


def _encode_batch(frames: Tensor, params: EncoderParams, config: EncoderConfig,
                  training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """(N, H, W) normalized frames -> (N, embed_dim). One batched pass."""
    n, h, w = frames.shape
    if h != config.input_size or w != config.input_size:
        raise ConfigurationError(
            f"encoder expects {config.input_size}px frames, got {h}x{w}"
        )
    x = reshape(frames, (n, 1, h, w))
    x = gelu(conv2d(x, params.stem.w, params.stem.b))
    for stage in params.stages:
        hidden = gelu(conv2d(x, stage.conv_a.w, stage.conv_a.b))
        x = gelu(x + conv2d(hidden, stage.conv_b.w, stage.conv_b.b))
        x = gelu(conv2d(x, stage.down.w, stage.down.b, stride=2))
    flat = reshape(x, (n, config.flat_dim))
    emb = linear(flat, params.out_w, params.out_b)
    return dropout(emb, config.dropout_p, rng, training)


def encode_frame(frame, params: EncoderParams, config: EncoderConfig,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Distill one frame into an embed_dim vector (deterministic at inference)."""
    if not isinstance(frame, Tensor):
        frame = Tensor(np.asarray(frame, dtype=params.out_w.dtype))
    out = _encode_batch(reshape(frame, (1,) + frame.shape), params, config, training, rng)
    return reshape(out, (config.embed_dim,))


def encode_clip(frames, params: EncoderParams, config: EncoderConfig,
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Encode every frame of a clip; row f is bitwise encode_frame(frame f).

    Frames go through the per-frame path one at a time: batching them into a
    single GEMM is not bitwise-stable across batch sizes on common BLAS
    builds, and per-frame equality is part of the contract.
    """
    frames_arr = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
    if frames_arr.ndim != 3 or frames_arr.shape[0] == 0:
        raise DegenerateInputError("encode_clip: empty clip or wrong rank")
    rows = [encode_frame(frames_arr[f], params, config, training, rng)
            for f in range(frames_arr.shape[0])]
    out = np.stack([r.data for r in rows])

    def backward(g):
        return tuple(g[i] for i in range(len(rows)))

    return Tensor.from_op(out, tuple(rows), backward)


def encoder_named_params(params: EncoderParams) -> list[tuple[str, Tensor]]:
    out = [("encoder.stem.w", params.stem.w), ("encoder.stem.b", params.stem.b)]
    for i, st in enumerate(params.stages):
        for part in ("conv_a", "conv_b", "down"):
            cp = getattr(st, part)
            out.append((f"encoder.stage{i}.{part}.w", cp.w))
            out.append((f"encoder.stage{i}.{part}.b", cp.b))
    out.append(("encoder.out.w", params.out_w))
    out.append(("encoder.out.b", params.out_b))
    return out
