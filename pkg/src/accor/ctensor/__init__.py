"""Minimal complex tensor core with reverse-mode differentiation."""

from .dft import dft_1d, dft_direct, fft, ifft
from .gradcheck import finite_diff_check
from .tensor import (
    GradientUsageError,
    GradRecord,
    ShapeError,
    Tensor,
    abs2,
    add,
    backward,
    complex_,
    concat,
    conj,
    div,
    exp,
    getitem,
    grad_enabled,
    imag,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    real,
    reshape,
    softmax,
    sqrt,
    sub,
    tensor,
    transpose,
    tsum,
)


def elementwise(op_kind: str, a, b) -> Tensor:
    """Apply ``+``, ``-`` or ``*`` elementwise (``op_kind`` is the symbol or its name)."""
    ops = {"+": add, "add": add, "-": sub, "sub": sub, "*": mul, "mul": mul}
    try:
        return ops[op_kind](a, b)
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None


__all__ = [
    "GradientUsageError",
    "GradRecord",
    "ShapeError",
    "Tensor",
    "abs2",
    "add",
    "backward",
    "complex_",
    "concat",
    "conj",
    "dft_1d",
    "dft_direct",
    "div",
    "elementwise",
    "exp",
    "fft",
    "finite_diff_check",
    "getitem",
    "grad_enabled",
    "ifft",
    "imag",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "power",
    "real",
    "reshape",
    "softmax",
    "sqrt",
    "sub",
    "tensor",
    "transpose",
    "tsum",
]
