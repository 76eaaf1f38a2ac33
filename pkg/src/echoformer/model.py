"""Full model: frame encoder + attention stack + both heads, with presets.

Presets fix the architecture knobs (layers, embedding width, dense width,
clip length) plus a desk-scale encoder. "full" mirrors the complete
346.8M-parameter configuration and exists for parameter accounting; the
reduced and toy presets are small enough to train on a laptop CPU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (
    EncoderConfig,
    EncoderParams,
    encode_clip,
    encoder_named_params,
    init_encoder,
)
from .errors import ConfigurationError
from .heads import (
    EFHeadParams,
    SDHeadParams,
    ef_head_named_params,
    ef_regress,
    init_ef_head,
    init_sd_head,
    sd_classify,
    sd_head_named_params,
    sd_regress,
)
from .losses import LossConfig
from .numerics import Tensor
from .transformer import (
    EmbeddingSequence,
    StackConfig,
    StackParams,
    init_stack,
    run_stack,
    stack_named_params,
    stack_param_count,
)


@dataclass
class Preset:
    name: str
    stack: StackConfig
    encoder: EncoderConfig
    loss: LossConfig

    @property
    def clip_len(self) -> int:
        return self.stack.max_seq


def _preset(name, layers, embed, ff, seq, enc_size, enc_stem, enc_stages) -> Preset:
    return Preset(
        name=name,
        stack=StackConfig(num_layers=layers, embed_dim=embed, ff_dim=ff, max_seq=seq),
        encoder=EncoderConfig(input_size=enc_size, stem_channels=enc_stem,
                              num_stages=enc_stages, embed_dim=embed),
        loss=LossConfig(),
    )


PRESETS = {
    "full": _preset("full", 16, 1024, 8192, 128, enc_size=128, enc_stem=32, enc_stages=4),
    "reduced1": _preset("reduced1", 4, 256, 1024, 64, enc_size=32, enc_stem=8, enc_stages=3),
    "reduced2": _preset("reduced2", 1, 128, 512, 64, enc_size=32, enc_stem=8, enc_stages=3),
    "toy": _preset("toy", 2, 32, 64, 32, enc_size=32, enc_stem=4, enc_stages=2),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


@dataclass
class ModelParams:
    preset: Preset
    sd_mode: str
    encoder: EncoderParams
    stack: StackParams
    sd_head: SDHeadParams
    ef_head: EFHeadParams

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return (encoder_named_params(self.encoder)
                + stack_named_params(self.stack)
                + sd_head_named_params(self.sd_head)
                + ef_head_named_params(self.ef_head))

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def init_model(preset: Preset, sd_mode: str, rng: np.random.Generator,
               dtype=np.float64) -> ModelParams:
    if sd_mode not in ("regression", "classification"):
        raise ConfigurationError(f"unknown sd_mode {sd_mode!r}")
    return ModelParams(
        preset=preset,
        sd_mode=sd_mode,
        encoder=init_encoder(preset.encoder, rng, dtype),
        stack=init_stack(preset.stack, rng, dtype),
        sd_head=init_sd_head(preset.stack.embed_dim, sd_mode, rng, dtype),
        ef_head=init_ef_head(preset.stack.embed_dim, rng, dtype),
    )


@dataclass
class ClipOutputs:
    fused: Tensor                 # (n, embed_dim), masked rows zeroed
    sd: Tensor                    # (n,) signal or (3, n) probabilities
    ef: Tensor                    # scalar in (0, 1)


def forward_clip(model: ModelParams, frames: np.ndarray, mask: np.ndarray,
                 training: bool = False, rng: np.random.Generator | None = None
                 ) -> ClipOutputs:
    """Run frames (normalized [0,1], already padded to the encoder size)."""
    emb = encode_clip(frames, model.encoder, model.preset.encoder, training, rng)
    seq = EmbeddingSequence(values=emb, mask=mask)
    _, fused = run_stack(seq, model.stack, model.preset.stack, training, rng)
    if model.sd_mode == "classification":
        sd = sd_classify(fused, model.sd_head)
    else:
        sd = sd_regress(fused, model.sd_head)
    ef = ef_regress(fused, mask, model.ef_head)
    return ClipOutputs(fused=fused, sd=sd, ef=ef)


def model_param_shapes(preset: Preset, sd_mode: str) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes without allocating anything (for accounting)."""
    enc, st = preset.encoder, preset.stack
    shapes: list[tuple[str, tuple[int, ...]]] = []
    chans = enc.stage_channels
    shapes.append(("encoder.stem.w", (chans[0], 1, 3, 3)))
    shapes.append(("encoder.stem.b", (chans[0],)))
    for i in range(enc.num_stages):
        c, c2 = chans[i], chans[i + 1]
        shapes += [(f"encoder.stage{i}.conv_a.w", (c, c, 3, 3)),
                   (f"encoder.stage{i}.conv_a.b", (c,)),
                   (f"encoder.stage{i}.conv_b.w", (c, c, 3, 3)),
                   (f"encoder.stage{i}.conv_b.b", (c,)),
                   (f"encoder.stage{i}.down.w", (c2, c, 3, 3)),
                   (f"encoder.stage{i}.down.b", (c2,))]
    shapes += [("encoder.out.w", (enc.flat_dim, enc.embed_dim)),
               ("encoder.out.b", (enc.embed_dim,))]

    d, f = st.embed_dim, st.ff_dim
    shapes.append(("stack.pos_emb", (st.max_seq, d)))
    for i in range(st.num_layers):
        for part in ("attn_query", "attn_key", "attn_value", "attn_out"):
            shapes += [(f"stack.layer{i}.{part}.w", (d, d)),
                       (f"stack.layer{i}.{part}.b", (d,))]
        shapes += [(f"stack.layer{i}.ff_in.w", (d, f)), (f"stack.layer{i}.ff_in.b", (f,)),
                   (f"stack.layer{i}.ff_out.w", (f, d)), (f"stack.layer{i}.ff_out.b", (d,))]
        for part in ("norm_attn", "norm_ff"):
            shapes += [(f"stack.layer{i}.{part}.gain", (d,)),
                       (f"stack.layer{i}.{part}.bias", (d,))]

    h1, h2 = d // 2, d // 4
    out_dim = 3 if sd_mode == "classification" else 1
    shapes += [("sd_head.lin1.w", (d, h1)), ("sd_head.lin1.b", (h1,)),
               ("sd_head.norm1.gain", (h1,)), ("sd_head.norm1.bias", (h1,)),
               ("sd_head.lin2.w", (h1, h2)), ("sd_head.lin2.b", (h2,)),
               ("sd_head.norm2.gain", (h2,)), ("sd_head.norm2.bias", (h2,)),
               ("sd_head.lin3.w", (h2, out_dim)), ("sd_head.lin3.b", (out_dim,)),
               ("ef_head.lin1.w", (d, h1)), ("ef_head.lin1.b", (h1,)),
               ("ef_head.norm.gain", (h1,)), ("ef_head.norm.bias", (h1,)),
               ("ef_head.lin2.w", (h1, 1)), ("ef_head.lin2.b", (1,))]
    return shapes


def count_params(preset: Preset, sd_mode: str = "regression") -> dict[str, int]:
    """Component totals plus the closed-form stack count for cross-checking."""
    shapes = model_param_shapes(preset, sd_mode)
    totals = {"encoder": 0, "stack": 0, "heads": 0}
    for name, shape in shapes:
        n = int(np.prod(shape))
        if name.startswith("encoder."):
            totals["encoder"] += n
        elif name.startswith("stack."):
            totals["stack"] += n
        else:
            totals["heads"] += n
    totals["total"] = sum(totals.values())
    totals["stack_closed_form"] = stack_param_count(preset.stack)
    return totals
