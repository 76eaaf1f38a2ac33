"""Gradient verification suite over every differentiable operation.

Each entry builds toy-sized random inputs and runs the central-difference
check against the tape gradients. Used by the `gradcheck` CLI command and by
the acceptance tests (which demand >= 10 seeds per op at tol 1e-4).
"""

from __future__ import annotations

import numpy as np

from .heads import ef_regress, init_ef_head, init_sd_head, sd_classify, sd_regress
from .losses import LossConfig, ef_loss, sd_classification_loss, sd_regression_loss
from .numerics import (
    GradCheckReport,
    Tensor,
    activation,
    grad_check,
    layer_norm,
    linear,
    masked_softmax,
    mul,
    parameter,
    reduce_sum,
)
from .transformer import (
    StackConfig,
    attention_block,
    encoder_layer,
    init_stack,
    self_attention,
)

_TOY_STACK = StackConfig(num_layers=2, embed_dim=16, num_heads=2, ff_dim=32,
                         max_seq=8, dropout_p=0.0)


def _rand_mask(rng: np.random.Generator, n: int) -> np.ndarray:
    mask = rng.random(n) > 0.3
    if not mask.any():
        mask[int(rng.integers(0, n))] = True
    return mask


def _layer_inputs(rng: np.random.Generator):
    params = init_stack(_TOY_STACK, rng).layers[0]
    x = parameter(rng.standard_normal((5, _TOY_STACK.embed_dim)))
    mask = _rand_mask(rng, 5)
    return params, x, mask


def run_gradient_suite(seeds: int = 10, tol: float = 1e-4) -> list[GradCheckReport]:
    """One aggregated report per op; each op is checked on `seeds` rng seeds."""
    reports: list[GradCheckReport] = []

    def run(name: str, builder) -> None:
        worst_abs = worst_rel = 0.0
        for seed in range(seeds):
            rng = np.random.default_rng(1000 + seed)
            rep = builder(rng)
            worst_abs = max(worst_abs, rep.max_abs_err)
            worst_rel = max(worst_rel, rep.max_rel_err)
        reports.append(GradCheckReport(op_name=name, max_abs_err=worst_abs,
                                       max_rel_err=worst_rel,
                                       passed=worst_rel <= tol))

    d = 8

    run("linear", lambda rng: grad_check(
        lambda x, w, b: reduce_sum(linear(x, w, b)),
        [parameter(rng.standard_normal((3, 4))),
         parameter(rng.standard_normal((4, d))),
         parameter(rng.standard_normal(d))], tol=tol, name="linear"))

    run("layer_norm", lambda rng: grad_check(
        lambda x, g, b: reduce_sum(layer_norm(x, g, b)),
        [parameter(rng.standard_normal((3, d))),
         parameter(rng.standard_normal(d)),
         parameter(rng.standard_normal(d))], tol=tol, name="layer_norm"))

    def activation_check(rng, kind):
        proj = rng.standard_normal((3, d))
        return grad_check(
            lambda x: reduce_sum(mul(activation(kind, x), proj)),
            [parameter(rng.standard_normal((3, d)))], tol=tol, name=kind)

    for kind in ("gelu", "tanh", "sigmoid"):
        run(kind, lambda rng, k=kind: activation_check(rng, k))

    def softmax_check(rng):
        mask = _rand_mask(rng, 6)
        proj = rng.standard_normal((4, 6))
        return grad_check(
            lambda s: reduce_sum(mul(masked_softmax(s, mask), proj)),
            [parameter(rng.standard_normal((4, 6)))], tol=tol, name="masked_softmax")

    run("masked_softmax", softmax_check)

    def attention_check(rng, fn, name, extra=()):
        params, x, mask = _layer_inputs(rng)
        # attn_key.b is excluded: a key-bias shift moves every score in a row
        # by the same amount and softmax is invariant to that, so its true
        # gradient is exactly zero and finite differences only see noise
        weights = [params.attn_query.w, params.attn_query.b,
                   params.attn_key.w,
                   params.attn_value.w, params.attn_value.b]
        for part in extra:
            obj = getattr(params, part)
            if hasattr(obj, "w"):
                weights += [obj.w, obj.b]
            else:
                weights += [obj.gain, obj.bias]
        proj = rng.standard_normal(x.shape)
        return grad_check(
            lambda *_: reduce_sum(mul(fn(x, mask, params, _TOY_STACK), proj)),
            [x] + weights, tol=tol, name=name)

    run("self_attention", lambda rng: attention_check(rng, self_attention,
                                                      "self_attention"))
    run("attention_block", lambda rng: attention_check(
        rng, attention_block, "attention_block", extra=("attn_out", "norm_attn")))
    run("encoder_layer", lambda rng: attention_check(
        rng, encoder_layer, "encoder_layer",
        extra=("attn_out", "norm_attn", "ff_in", "ff_out", "norm_ff")))

    def sd_head_check(rng, mode):
        head = init_sd_head(16, mode, rng)
        fused = parameter(rng.standard_normal((5, 16)))
        fn = sd_classify if mode == "classification" else sd_regress
        proj = (rng.standard_normal((3, 5)) if mode == "classification"
                else rng.standard_normal(5))
        tensors = [fused, head.lin1.w, head.lin1.b, head.norm1.gain, head.norm1.bias,
                   head.lin2.w, head.lin2.b, head.norm2.gain, head.norm2.bias,
                   head.lin3.w, head.lin3.b]
        return grad_check(lambda *_: reduce_sum(mul(fn(fused, head), proj)),
                          tensors, tol=tol, name=f"sd_{mode}")

    run("sd_regress", lambda rng: sd_head_check(rng, "regression"))
    run("sd_classify", lambda rng: sd_head_check(rng, "classification"))

    def ef_head_check(rng):
        head = init_ef_head(16, rng)
        fused = parameter(rng.standard_normal((5, 16)))
        mask = _rand_mask(rng, 5)
        tensors = [fused, head.lin1.w, head.lin1.b, head.norm.gain, head.norm.bias,
                   head.lin2.w, head.lin2.b]
        return grad_check(lambda *_: ef_regress(fused, mask, head),
                          tensors, tol=tol, name="ef_regress")

    run("ef_regress", ef_head_check)

    def ef_loss_check(rng):
        targets = rng.uniform(0.2, 0.8, size=4)
        return grad_check(
            lambda p: ef_loss(p, targets, LossConfig()),
            [parameter(rng.uniform(0.1, 0.9, size=4))], tol=tol, name="ef_loss")

    run("ef_loss", ef_loss_check)

    def sd_reg_loss_check(rng):
        labels = rng.uniform(-1, 1, size=6)
        mask = _rand_mask(rng, 6)
        return grad_check(
            lambda s: sd_regression_loss(s, labels, mask),
            [parameter(rng.uniform(-0.9, 0.9, size=6))], tol=tol,
            name="sd_regression_loss")

    run("sd_regression_loss", sd_reg_loss_check)

    def cls_loss_check(rng):
        logits = parameter(rng.standard_normal((6, 3)))
        labels = rng.integers(0, 3, size=6)
        mask = _rand_mask(rng, 6)

        def fn(lg):
            from .numerics import permute
            probs = permute(masked_softmax(lg, np.ones(3, dtype=bool)), (1, 0))
            return sd_classification_loss(probs, labels, (1.0, 5.0, 5.0), mask)

        return grad_check(fn, [logits], tol=tol, name="sd_classification_loss")

    run("sd_classification_loss", cls_loss_check)

    return reports
