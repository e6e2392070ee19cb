"""Discrete Fourier transforms of arbitrary length.

``fft`` is a recursive mixed-radix decimation-in-time transform.  Prime
lengths up to ``DIRECT_PRIME_MAX`` are handled by a dense DFT matrix and
larger primes by Bluestein's chirp-z algorithm (which itself recurses into a
power-of-two transform).  ``dft_direct`` is the O(N^2) reference sum.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor

DIRECT_PRIME_MAX = 31


def dft_direct(x, axis: int = -1) -> np.ndarray:
    """Plain O(N^2) evaluation of ``S[k] = sum_t s[t] exp(-2j*pi*k*t/N)``."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = x.shape[-1]
    t = np.arange(n)
    out = np.empty_like(x)
    for k in range(n):
        # reduce k*t mod n before scaling for an accurate phase
        phase = np.exp(-2j * np.pi * ((k * t) % n) / n)
        out[..., k] = (x * phase).sum(axis=-1)
    return np.moveaxis(out, -1, axis)


@lru_cache(maxsize=None)
def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=64)
def _dft_matrix(n: int) -> np.ndarray:
    kt = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * kt / n)


@lru_cache(maxsize=64)
def _twiddles(p: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n)
    rk = np.outer(np.arange(p), k) % n
    return np.exp(-2j * np.pi * rk / n), k % (n // p)


@lru_cache(maxsize=16)
def _bluestein_plan(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    m = 1 << int(np.ceil(np.log2(2 * n - 1)))
    t = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((t * t) % (2 * n)) / n)
    kernel = np.zeros(m, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    kernel[m - n + 1 :] = np.conj(chirp[1:])[::-1]
    return chirp, _fft_last(kernel), m


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    chirp, kernel_f, m = _bluestein_plan(n)
    padded = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    padded[..., :n] = x * chirp
    conv = np.conj(_fft_last(np.conj(_fft_last(padded) * kernel_f))) / m
    return conv[..., :n] * chirp


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        if n <= DIRECT_PRIME_MAX:
            return x @ _dft_matrix(n).T
        return _bluestein(x)
    m = n // p
    # x[..., r + p*t] -> sub-sequence r of length m
    sub = _fft_last(np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2))
    tw, kmod = _twiddles(p, n)
    return np.einsum("...rk,rk->...k", sub[..., kmod], tw)


def fft(x, axis: int = -1) -> np.ndarray:
    """Forward DFT of a numpy array along ``axis`` (any length >= 1)."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 0 or x.shape[axis] < 1:
        raise ShapeError("dft needs at least one sample along the transform axis")
    x = np.moveaxis(x, axis, -1)
    return np.moveaxis(_fft_last(np.ascontiguousarray(x)), -1, axis)


def ifft(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[axis]
    return np.conj(fft(np.conj(x), axis=axis)) / n


def dft_1d(signal, axis: int = -1) -> Tensor:
    """Differentiable DFT along ``axis`` of a tensor.

    For a ``(channels, N)`` input each channel is transformed independently.
    """
    x = signal if isinstance(signal, Tensor) else Tensor(signal)
    if x.ndim == 0:
        raise ShapeError("dft_1d needs a tensor of rank >= 1")
    out = fft(x.data, axis=axis)

    def backward(g):
        # adjoint of the DFT matrix
        gx = np.conj(fft(np.conj(g), axis=axis))
        return (gx if x.is_complex else gx.real,)

    return Tensor.from_op(out, (x,), backward)
