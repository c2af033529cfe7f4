"""Input validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .geometry import BinaryMask, MultiChannelImage


def check_channel(channel) -> np.ndarray:
    """Validate a single channel: 2-D, finite, intensities in [0, 1]."""
    arr = np.asarray(channel, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"channel must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("channel contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("channel intensities must lie in [0, 1]")
    return arr


def as_multichannel_image(x, role_map, image_id="") -> MultiChannelImage:
    """Coerce an image-like input to :class:`MultiChannelImage`.

    Accepts a MultiChannelImage (returned as-is), a (C, H, W) array, or a
    sequence of 2-D channels.
    """
    if isinstance(x, MultiChannelImage):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        channels = (check_channel(arr),)
    elif arr.ndim == 3:
        channels = tuple(check_channel(c) for c in arr)
    else:
        raise DimensionMismatch(f"expected 2-D or 3-D input, got shape {arr.shape}")
    return MultiChannelImage(channels=channels, role_map=role_map, image_id=image_id)


def as_binary_mask(x) -> BinaryMask:
    if isinstance(x, BinaryMask):
        return x
    return BinaryMask(np.asarray(x))
