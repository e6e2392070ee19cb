"""Complex-valued network layers and the real-valued attention block."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..ctensor import ShapeError, Tensor, concat, imag, matmul, real, softmax
from ..ctensor.tensor import _fit_grad


def _complex_product_sum(cols: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Sum of complex products ``k * x`` over the receptive field.

    With ``k = a + jb`` and ``x = c + jd`` each term is ``(ca - db) + j(cb + da)``.
    """
    return cols @ kernels


def _same_padding(ksize: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    return tuple(((k - 1) // 2, k - 1 - (k - 1) // 2) for k in ksize)


def complex_conv_forward(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding="same",
) -> Tensor:
    """Complex cross-correlation over 1 or 2 spatial axes.

    ``x`` is ``(batch, in_channels, *spatial)`` and ``kernels`` is
    ``(out_channels, in_channels, *kernel)``.  ``padding`` is ``"same"``,
    ``"valid"`` or an integer applied symmetrically.
    """
    nd = kernels.ndim - 2
    if nd not in (1, 2) or x.ndim != nd + 2:
        raise ShapeError(f"input {x.shape} and kernels {kernels.shape} disagree on dimensionality")
    if x.shape[1] != kernels.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernels expect {kernels.shape[1]}")
    if int(stride) != stride or stride < 1:
        raise ShapeError(f"stride must be a positive integer, got {stride}")
    ksize = kernels.shape[2:]
    if padding == "same":
        if stride != 1:
            raise ShapeError("'same' padding requires stride 1")
        pads = _same_padding(ksize)
    elif padding == "valid":
        pads = tuple((0, 0) for _ in ksize)
    else:
        pads = tuple((int(padding), int(padding)) for _ in ksize)
    spatial = x.shape[2:]
    padded = tuple(s + lo + hi for s, (lo, hi) in zip(spatial, pads))
    if any(p < k for p, k in zip(padded, ksize)):
        raise ShapeError(f"kernel {ksize} larger than padded input {padded}")
    out_sp = tuple((p - k) // stride + 1 for p, k in zip(padded, ksize))

    batch, cin = x.shape[:2]
    cout = kernels.shape[0]
    sp_axes = tuple(range(2, 2 + nd))
    xp = np.pad(x.data, ((0, 0), (0, 0)) + pads)
    win = sliding_window_view(xp, ksize, axis=sp_axes)
    if stride > 1:
        win = win[(slice(None), slice(None)) + tuple(slice(None, None, stride) for _ in range(nd))]
    # (B, C, *S_out, *K) -> (B, *S_out, C, *K)
    order = (0,) + tuple(range(2, 2 + nd)) + (1,) + tuple(range(2 + nd, 2 + 2 * nd))
    n_pos = int(np.prod(out_sp))
    cols = np.ascontiguousarray(win.transpose(order)).reshape(batch * n_pos, -1)
    wmat = kernels.data.reshape(cout, -1).T
    y = _complex_product_sum(cols, wmat)
    out = y.reshape((batch,) + out_sp + (cout,))
    out = np.moveaxis(out, -1, 1)
    if bias is not None:
        out = out + bias.data.reshape((cout,) + (1,) * nd)
    out = np.ascontiguousarray(out)

    def backward(g):
        gm = np.moveaxis(g, 1, -1).reshape(batch * n_pos, cout)
        gx = gk = gb = None
        if kernels.requires_grad:
            # conj(cols)^T @ gm without conjugating the large column buffer
            gk = _fit_grad(np.conj(cols.T @ np.conj(gm)).T.reshape(kernels.shape), kernels)
        if bias is not None and bias.requires_grad:
            gb = _fit_grad(gm.sum(axis=0), bias)
        if x.requires_grad:
            gcols = (gm @ np.conj(wmat).T).reshape((batch,) + out_sp + (cin,) + ksize)
            gxp = np.zeros(xp.shape, dtype=np.result_type(gcols, x.data))
            for offset in np.ndindex(*ksize):
                dst = (slice(None), slice(None)) + tuple(
                    slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offset, out_sp)
                )
                src = np.moveaxis(gcols[(Ellipsis,) + offset], nd + 1, 1)
                gxp[dst] += src
            crop = (slice(None), slice(None)) + tuple(
                slice(lo, lo + s) for (lo, _), s in zip(pads, spatial)
            )
            gx = _fit_grad(gxp[crop], x)
        return gx, gk, gb

    parents = (x, kernels) + ((bias,) if bias is not None else ())
    return Tensor.from_op(out, parents, backward)


def complex_batchnorm_forward(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalisation applied separately to the real and imaginary parts.

    Statistics are per feature channel (axis 1) over the batch and spatial
    axes.  ``scale``/``shift`` broadcast against ``(2, channels)``: row 0 acts
    on the real part, row 1 on the imaginary part.  ``running_mean`` and
    ``running_var`` have shape ``(2, channels)`` and are updated in place in
    training mode.
    """
    if x.ndim < 2:
        raise ShapeError("batch norm needs (batch, channels, ...) input")
    channels = x.shape[1]
    parts = np.stack([np.real(x.data), np.imag(x.data)])
    red_axes = (1,) + tuple(range(3, parts.ndim))
    bshape = (2, 1, channels) + (1,) * (x.ndim - 2)
    count = parts.size // (2 * channels)
    if training:
        if x.shape[0] < 2:
            raise ValueError("training-mode batch norm needs a batch of at least 2")
        mu = parts.mean(axis=red_axes, keepdims=True)
        var = parts.var(axis=red_axes, keepdims=True)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.reshape(2, channels)
        if running_var is not None:
            running_var *= 1.0 - momentum
            running_var += momentum * var.reshape(2, channels)
    else:
        if running_mean is None or running_var is None:
            raise ValueError("inference-mode batch norm needs running statistics")
        mu = running_mean.reshape(bshape)
        var = running_var.reshape(bshape)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (parts - mu) * inv
    try:
        gamma = np.broadcast_to(scale.data, (2, channels)).reshape(bshape)
        beta = np.broadcast_to(shift.data, (2, channels)).reshape(bshape)
    except ValueError as exc:
        raise ShapeError(f"scale/shift do not broadcast to (2, {channels})") from exc
    y = gamma * xhat + beta
    out = y[0] + 1j * y[1]

    def backward(g):
        gs = np.stack([np.real(g), np.imag(g)])
        gscale = gshift = gx = None
        if scale.requires_grad:
            gscale = _fit_grad((gs * xhat).sum(axis=red_axes).reshape(2, channels), scale)
        if shift.requires_grad:
            gshift = _fit_grad(gs.sum(axis=red_axes).reshape(2, channels), shift)
        if x.requires_grad:
            dxhat = gs * gamma
            if training:
                dx = (inv / count) * (
                    count * dxhat
                    - dxhat.sum(axis=red_axes, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=red_axes, keepdims=True)
                )
            else:
                dx = dxhat * inv
            gx = dx[0] + 1j * dx[1]
        return gx, gscale, gshift

    return Tensor.from_op(out, (x, scale, shift), backward)


def crelu(z: Tensor) -> Tensor:
    """Keep ``z`` where both real and imaginary parts are >= 0, else 0."""
    re, im = np.real(z.data), np.imag(z.data)
    keep = (re >= 0) & (im >= 0)
    # subgradient 0 on the kinks
    pass_grad = (re > 0) & (im > 0)
    return Tensor.from_op(np.where(keep, z.data, 0), (z,), lambda g: (g * pass_grad,))


def complex_avg_pool(x: Tensor, window) -> Tensor:
    """Non-overlapping average pooling over the trailing spatial axes.

    Trailing elements that do not fill a whole window are dropped.
    ``window`` is an int (last axis) or a tuple covering the last axes.
    """
    windows = (int(window),) if np.isscalar(window) else tuple(int(w) for w in window)
    nd = len(windows)
    if x.ndim < nd or any(w < 1 for w in windows):
        raise ShapeError(f"cannot pool shape {x.shape} with window {windows}")
    lead = x.shape[: x.ndim - nd]
    spatial = x.shape[x.ndim - nd :]
    kept = tuple(s // w for s, w in zip(spatial, windows))
    if any(k == 0 for k in kept):
        raise ShapeError(f"window {windows} larger than input extent {spatial}")
    index = (Ellipsis,) + tuple(slice(0, k * w) for k, w in zip(kept, windows))
    exact = all(k * w == s for k, w, s in zip(kept, windows, spatial))
    trimmed = x if exact else x[index]
    split = lead + tuple(v for k, w in zip(kept, windows) for v in (k, w))
    axes = tuple(len(lead) + 2 * i + 1 for i in range(nd))
    return trimmed.reshape(split).mean(axis=axes)


def realify_project(features: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Project complex feature channels and realify.

    ``features`` is ``(batch, channels, positions)``; ``weight`` maps channels
    to ``P`` complex values.  Returns real tokens ``(batch, positions, 2P)``
    laid out as all real parts followed by all imaginary parts.
    """
    if features.ndim != 3 or features.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"features {features.shape} do not match projection {weight.shape}"
        )
    v = matmul(features.swapaxes(1, 2), weight)
    if bias is not None:
        v = v + bias
    return concat([real(v), imag(v)], axis=-1)


def multi_head_attention(
    tokens: Tensor,
    params: dict[str, Tensor],
    heads: int,
    return_weights: bool = False,
):
    """One residual multi-head self-attention layer without positional encoding.

    ``tokens`` is ``(batch, seq, dim)``; ``params`` holds ``wq, bq, wk, bk,
    wv, bv, wo, bo`` with ``w*`` shaped ``(dim, dim)``.
    """
    if tokens.ndim != 3:
        raise ShapeError(f"attention expects (batch, seq, dim), got {tokens.shape}")
    batch, seq, dim = tokens.shape
    if params["wq"].shape[0] != dim:
        raise ShapeError(f"token dimension {dim} does not match attention width {params['wq'].shape[0]}")
    if dim % heads:
        raise ShapeError(f"dimension {dim} not divisible by {heads} heads")
    hd = dim // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(batch, seq, heads, hd).transpose(0, 2, 1, 3)

    q = split(matmul(tokens, params["wq"]) + params["bq"])
    k = split(matmul(tokens, params["wk"]) + params["bk"])
    v = split(matmul(tokens, params["wv"]) + params["bv"])
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(hd))
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, v).transpose(0, 2, 1, 3).reshape(batch, seq, dim)
    out = tokens + (matmul(ctx, params["wo"]) + params["bo"])
    if return_weights:
        return out, weights.data
    return out
