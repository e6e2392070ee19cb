"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import GradientUsageError, Tensor, backward


def _scalar_value(out) -> float:
    if not isinstance(out, Tensor) or out.size != 1:
        raise GradientUsageError("checked function must return a scalar Tensor")
    value = out.data.reshape(())
    if np.iscomplexobj(value) and value.imag != 0.0:
        raise GradientUsageError("checked function must be real-valued")
    return float(np.real(value))


def finite_diff_check(
    fn: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    step: float = 1e-4,
) -> float:
    """Largest relative disagreement between analytic and numeric gradients.

    Every real component of every input is perturbed by ``+-step``; the error
    for a component is ``|analytic - numeric| / max(1, |numeric|)``.
    ``fn`` is called with the inputs as positional arguments.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    single = isinstance(inputs, Tensor)
    tensors = [inputs] if single else list(inputs)
    for t in tensors:
        t.requires_grad = True
        t.grad = None

    out = fn(*tensors)
    _scalar_value(out)
    grads = backward(out)
    worst = 0.0
    for t in tensors:
        analytic = grads.get(t)
        if analytic is None:
            analytic = np.zeros(t.shape, dtype=t.dtype)
        parts = [(np.real(analytic), 1.0)]
        if t.is_complex:
            parts.append((np.imag(analytic), 1j))
        original = t.data
        for analytic_part, unit in parts:
            flat = analytic_part.reshape(-1)
            for i in range(t.size):
                bumped = original.copy().reshape(-1)
                bumped[i] = original.reshape(-1)[i] + unit * step
                t.data = bumped.reshape(t.shape)
                f_plus = _scalar_value(fn(*tensors))
                bumped[i] = original.reshape(-1)[i] - unit * step
                t.data = bumped.reshape(t.shape)
                f_minus = _scalar_value(fn(*tensors))
                t.data = original
                numeric = (f_plus - f_minus) / (2.0 * step)
                err = abs(flat[i] - numeric) / max(1.0, abs(numeric))
                worst = max(worst, err)
    return worst
