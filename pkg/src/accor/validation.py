"""Input checks for the estimator API.

``sklearn.utils.check_array`` refuses complex data, so radar arrays get
their own checker with the same spirit: coerce, check shape and finiteness,
and fail with a message naming the offending argument.
"""

from __future__ import annotations

import numbers

import numpy as np


def check_iq_array(X, n_channels: int | None = None, n_samples: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a complex128 array shaped ``(n_frames, channels, samples)``.

    A single 2-D frame is promoted to a batch of one.  Frame lists and
    objects exposing ``.data`` (``IQFrame``) are accepted.
    """
    if isinstance(X, (list, tuple)) and X and hasattr(X[0], "data"):
        X = np.stack([np.asarray(f.data) for f in X])
    elif hasattr(X, "data") and not isinstance(X, np.ndarray):
        X = X.data
    try:
        arr = np.asarray(X)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} could not be converted to an array: {exc}") from None
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.number):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.complex128, copy=False)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-D (frames, channels, samples), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} contains no frames")
    if n_channels is not None and arr.shape[1] != n_channels:
        raise ValueError(f"{name} has {arr.shape[1]} channels, expected {n_channels}")
    if n_samples is not None and arr.shape[2] != n_samples:
        raise ValueError(f"{name} has {arr.shape[2]} samples per channel, expected {n_samples}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_labels(y, n_frames: int, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if len(arr) != n_frames:
        raise ValueError(f"{name} has {len(arr)} entries for {n_frames} frames")
    return arr


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_fraction(value, name: str, low: float = 0.0, high: float = 1.0) -> float:
    value = float(value)
    if not low <= value <= high:
        raise ValueError(f"{name} must lie in [{low}, {high}], got {value}")
    return value
