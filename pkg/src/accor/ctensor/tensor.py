"""Complex-valued tensors with reverse-mode differentiation.

Gradients follow the split-real convention: a complex parameter ``p`` is
treated as the pair of real variables ``(re p, im p)`` and its gradient is
stored as the complex array ``dL/d(re p) + 1j * dL/d(im p)``.  With that
encoding every holomorphic operation ``y = f(x)`` propagates
``grad_x = grad_y * conj(f'(x))``; gradients flowing into real-valued tensors
are projected onto their real part.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GradientUsageError(RuntimeError):
    """Differentiation was requested in an unsupported way."""


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def as_array(value) -> np.ndarray:
    """Coerce ``value`` to a float64 or complex128 array."""
    arr = np.asarray(value)
    if np.iscomplexobj(arr):
        return arr.astype(np.complex128, copy=False)
    return arr.astype(np.float64, copy=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _fit_grad(grad: np.ndarray, target: "Tensor") -> np.ndarray:
    grad = _unbroadcast(np.asarray(grad), target.shape)
    if not target.is_complex and np.iscomplexobj(grad):
        grad = grad.real
    return grad


class Tensor:
    """An n-dimensional real or complex array that records its history.

    Values are immutable once created.  Operations between tensors that
    require gradients build the graph consumed by :func:`backward`.
    """

    __array_priority__ = 1000

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def from_op(cls, data, parents: Iterable["Tensor"], backward: BackwardFn) -> "Tensor":
        """Wrap the result of a custom operation.

        ``backward`` maps the output gradient to one gradient per parent
        (``None`` for parents that need none).  The graph is only recorded when
        some parent requires a gradient.
        """
        parents = tuple(parents)
        out = cls(data)
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    @property
    def grad_re(self) -> np.ndarray | None:
        return None if self.grad is None else np.real(self.grad).copy()

    @property
    def grad_im(self) -> np.ndarray | None:
        if self.grad is None:
            return None
        return np.imag(self.grad).copy() if np.iscomplexobj(self.grad) else np.zeros_like(self.grad)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self):
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    @property
    def T(self):
        return self.swapaxes(-1, -2)

    @property
    def real(self):
        return real(self)

    @property
    def imag(self):
        return imag(self)

    def conj(self):
        return conj(self)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot combine shapes {a.shape} and {b.shape}") from exc


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _broadcast_shape(a, b)
    return Tensor.from_op(
        a.data + b.data, (a, b), lambda g: (_fit_grad(g, a), _fit_grad(g, b))
    )


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _broadcast_shape(a, b)
    return Tensor.from_op(
        a.data - b.data, (a, b), lambda g: (_fit_grad(g, a), _fit_grad(-g, b))
    )


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _broadcast_shape(a, b)

    def backward(g):
        return (
            _fit_grad(g * np.conj(b.data), a) if a.requires_grad else None,
            _fit_grad(g * np.conj(a.data), b) if b.requires_grad else None,
        )

    return Tensor.from_op(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _broadcast_shape(a, b)
    out = a.data / b.data

    def backward(g):
        inv = np.conj(1.0 / b.data)
        return (
            _fit_grad(g * inv, a) if a.requires_grad else None,
            _fit_grad(-g * np.conj(out) * inv, b) if b.requires_grad else None,
        )

    return Tensor.from_op(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _t(a)
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = _t(a)
    p = float(exponent)
    return Tensor.from_op(
        a.data**p, (a,), lambda g: (_fit_grad(g * np.conj(p * a.data ** (p - 1)), a),)
    )


def exp(a) -> Tensor:
    a = _t(a)
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (_fit_grad(g * np.conj(out), a),))


def log(a) -> Tensor:
    a = _t(a)
    return Tensor.from_op(
        np.log(a.data), (a,), lambda g: (_fit_grad(g * np.conj(1.0 / a.data), a),)
    )


def sqrt(a) -> Tensor:
    a = _t(a)
    out = np.sqrt(a.data)
    return Tensor.from_op(out, (a,), lambda g: (_fit_grad(g * np.conj(0.5 / out), a),))


def real(a) -> Tensor:
    a = _t(a)
    return Tensor.from_op(np.real(a.data).copy(), (a,), lambda g: (_fit_grad(np.real(g), a),))


def imag(a) -> Tensor:
    a = _t(a)
    out = np.imag(a.data).copy() if a.is_complex else np.zeros_like(a.data)
    return Tensor.from_op(out, (a,), lambda g: (_fit_grad(1j * np.real(g), a),))


def conj(a) -> Tensor:
    a = _t(a)
    return Tensor.from_op(np.conj(a.data), (a,), lambda g: (_fit_grad(np.conj(g), a),))


def abs2(a) -> Tensor:
    """Squared magnitude ``|a|**2`` as a real tensor."""
    a = _t(a)
    out = np.real(a.data * np.conj(a.data))
    return Tensor.from_op(out, (a,), lambda g: (_fit_grad(2.0 * np.real(g) * a.data, a),))


def complex_(re, im) -> Tensor:
    """Assemble ``re + 1j*im`` from two real tensors."""
    re, im = _t(re), _t(im)
    _broadcast_shape(re, im)
    return Tensor.from_op(
        re.data + 1j * im.data,
        (re, im),
        lambda g: (_fit_grad(np.real(g), re), _fit_grad(np.imag(g), im)),
    )


# -- linear algebra and reductions ---------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise ShapeError(f"batch extents differ: {a.shape} @ {b.shape}") from exc

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _fit_grad(g @ np.conj(np.swapaxes(b.data, -1, -2)), a)
        if b.requires_grad:
            gb = _fit_grad(np.conj(np.swapaxes(a.data, -1, -2)) @ g, b)
        return ga, gb

    return Tensor.from_op(a.data @ b.data, (a, b), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor.from_op(out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _t(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = _t(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),)
    )


def getitem(a, index) -> Tensor:
    a = _t(a)
    out = a.data[index]

    def backward(g):
        full = np.zeros(a.shape, dtype=np.result_type(g, a.data))
        np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(np.array(out, copy=True), (a,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        parts = np.split(g, bounds, axis=axis)
        return tuple(_fit_grad(p, t) for p, t in zip(parts, tensors))

    return Tensor.from_op(out, tensors, backward)


# -- fused real-valued reductions --------------------------------------------
def log_softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Numerically stable log-softmax of a real tensor.

    Entries where ``mask`` is False take no part in the normaliser and are
    reported as 0 with zero gradient.
    """
    x = _t(x)
    if x.is_complex:
        raise GradientUsageError("log_softmax expects a real tensor")
    data = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        data = np.where(mask, data, -np.inf)
    shift = np.max(data, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    z = data - shift
    e = np.exp(z)
    lse = np.log(e.sum(axis=axis, keepdims=True))
    out = z - lse
    probs = e / e.sum(axis=axis, keepdims=True)
    if mask is not None:
        out = np.where(mask, out, 0.0)

    def backward(g):
        if mask is not None:
            g = np.where(mask, g, 0.0)
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = _t(x)
    if x.is_complex:
        raise GradientUsageError("softmax expects a real tensor")
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward)


# -- differentiation record ----------------------------------------------------
class GradRecord:
    """Operation nodes reachable from an output, in topological order."""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes = self._toposort(output)

    @staticmethod
    def _toposort(root: Tensor) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self) -> dict[Tensor, np.ndarray]:
        out = self.output
        if out.size != 1:
            raise GradientUsageError(f"backward needs a scalar output, got shape {out.shape}")
        if out.is_complex and np.imag(out.data).item() != 0.0:
            raise GradientUsageError("backward needs a real-valued output")
        grads: dict[int, np.ndarray] = {id(out): np.ones(out.shape)}
        leaves: dict[Tensor, np.ndarray] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                g = _fit_grad(g, node)
                node.grad = g
                leaves[node] = g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return leaves


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Back-propagate from a real scalar ``loss``.

    Every leaf tensor with ``requires_grad`` reachable from ``loss`` gets its
    ``.grad`` overwritten; the same mapping is returned.
    """
    if not isinstance(loss, Tensor):
        raise GradientUsageError("backward expects a Tensor")
    if not loss.requires_grad:
        raise GradientUsageError("loss does not depend on any tensor requiring gradients")
    return GradRecord(loss).backward()
