"""Batched image tensors and label vectors.

Images are plain numpy arrays of shape (N, C, H, W) with float64 values in
[0, 1]; labels are int arrays of shape (N,) with 0 = real, 1 = synthetic.
The helpers here enforce those contracts at module boundaries.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

LABEL_REAL = 0
LABEL_FAKE = 1


def as_image_batch(data: np.ndarray) -> np.ndarray:
    """Validate and return a float64 (N, C, H, W) image batch in [0, 1]."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 4:
        raise ContractError(f"image batch must be 4-D (N, C, H, W), got shape {x.shape}")
    n, c, h, w = x.shape
    if n < 1:
        raise ContractError("image batch must contain at least one image")
    if c not in (1, 3):
        raise ContractError(f"channel count must be 1 or 3, got {c}")
    if h < 8 or w < 8:
        raise ContractError(f"image height/width must be >= 8, got {h}x{w}")
    if not np.all(np.isfinite(x)):
        raise ContractError("image batch contains non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ContractError(
            f"pixel values must lie in [0, 1], got range [{x.min():.6g}, {x.max():.6g}]"
        )
    return x


def as_label_vector(labels: np.ndarray, batch_size: int | None = None) -> np.ndarray:
    """Validate and return an int64 label vector with entries in {0, 1}."""
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ContractError(f"labels must be 1-D, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ContractError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0 (real) or 1 (synthetic)")
    if batch_size is not None and y.shape[0] != batch_size:
        raise ContractError(f"label count {y.shape[0]} does not match batch size {batch_size}")
    return y


def clip_pixels(x: np.ndarray) -> np.ndarray:
    """Clamp an image-shaped array into the valid pixel range [0, 1]."""
    return np.clip(x, 0.0, 1.0)
