"""Finite-difference verification of tape gradients.

grad_check perturbs every element of every differentiable input, evaluates
the objective with central differences (f(x+eps) - f(x-eps)) / (2 eps) in
double precision, and compares against the gradients the tape produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, EvaluationError
from .tensor import Tensor

_REL_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    """Outcome of one gradient check."""

    op_name: str
    max_abs_err: float
    max_rel_err: float
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.op_name}: max_abs_err={self.max_abs_err:.3e} "
                f"max_rel_err={self.max_rel_err:.3e}")


def _scalar_value(fn, inputs) -> tuple[Tensor, np.ndarray]:
    out = fn(*inputs)
    if not np.isfinite(out.data).all():
        raise EvaluationError(f"grad_check: non-finite forward value from {fn}")
    if out.size == 1:
        return out, np.ones_like(out.data)
    # reduce a non-scalar op with a fixed random projection so sign errors
    # cannot cancel the way a plain sum would let them
    proj = np.random.default_rng(20240915).standard_normal(out.shape)
    return out, proj


def grad_check(op, inputs, eps: float = 1e-5, tol: float = 1e-4,
               name: str | None = None) -> GradCheckReport:
    """Compare tape gradients of op(*inputs) against central differences.

    Only inputs with requires_grad=True are perturbed. Relative error uses
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ConfigurationError(f"grad_check eps {eps} outside [1e-7, 1e-3]")
    inputs = list(inputs)
    checked = [t for t in inputs if isinstance(t, Tensor) and t.requires_grad]
    if not checked:
        raise ConfigurationError("grad_check: no input has requires_grad=True")
    for t in checked:
        t.zero_grad()

    out, proj = _scalar_value(op, inputs)
    out.backward(proj)

    max_abs = 0.0
    max_rel = 0.0
    for t in checked:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float((op(*inputs).data * proj).sum())
            flat[i] = orig - eps
            f_minus = float((op(*inputs).data * proj).sum())
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            abs_err = abs(a - numeric)
            rel_err = abs_err / max(abs(a), abs(numeric), _REL_FLOOR)
            max_abs = max(max_abs, abs_err)
            max_rel = max(max_rel, rel_err)

    return GradCheckReport(
        op_name=name or getattr(op, "__name__", "op"),
        max_abs_err=max_abs,
        max_rel_err=max_rel,
        passed=max_rel <= tol,
    )
