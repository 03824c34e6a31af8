"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_descriptors(X, dim: int | None = None) -> np.ndarray:
    """2-D finite float array, optionally with a fixed number of columns."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError(f"expected a 2-D descriptor array, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"descriptor dimension {X.shape[1]} != expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("descriptors contain non-finite values")
    return X


def check_word_ids(ids, n: int, upper: int | None = None) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.shape != (n,):
        raise ValueError(f"expected {n} ids, got shape {ids.shape}")
    if ids.size and not np.issubdtype(ids.dtype, np.integer):
        if not np.all(ids == np.round(ids)):
            raise ValueError("ids must be integers")
    ids = ids.astype(np.int64)
    if ids.size and ids.min() < 0:
        raise ValueError("ids must be non-negative")
    if upper is not None and ids.size and ids.max() >= upper:
        raise ValueError(f"id {ids.max()} out of range [0, {upper})")
    return ids


def check_pixels(pixels, n: int | None = None) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if n is not None and pixels.shape[0] != n:
        raise ValueError(f"expected {n} pixel rows, got {pixels.shape[0]}")
    return pixels
