"""Image loading and artifact export (TIFF/PNG, label maps, CSV text)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageSequence

from .errors import FormatError
from .geometry import BinaryMask, InstanceLabelMap, MultiChannelImage


def _normalize_frame(frame: Image.Image) -> np.ndarray:
    """One page to a float array in [0, 1], divided by the bit-depth max."""
    arr = np.asarray(frame)
    if arr.ndim == 3:  # color page: treat its bands as extra channels upstream
        raise FormatError("expected single-band pages; split color images per channel")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == np.int32:  # Pillow "I" mode; 16-bit data widened
        return arr.astype(np.float64) / 65535.0
    if np.issubdtype(arr.dtype, np.floating):
        return np.clip(arr.astype(np.float64), 0.0, 1.0)
    raise FormatError(f"unsupported pixel type {arr.dtype}")


def load_channels(path) -> list[np.ndarray]:
    """All pages of a TIFF/PNG as normalized 2-D channels."""
    path = Path(path)
    with Image.open(path) as img:
        return [_normalize_frame(frame) for frame in ImageSequence.Iterator(img)]


def load_multichannel_image(path, role_map, image_id=None) -> MultiChannelImage:
    channels = load_channels(path)
    return MultiChannelImage(
        channels=tuple(channels),
        role_map=role_map,
        image_id=image_id or Path(path).stem,
    )


def save_multichannel_tiff(image: MultiChannelImage, path):
    """Write channels as 16-bit pages of one multi-page TIFF."""
    pages = [
        Image.fromarray((np.asarray(c) * 65535.0).round().astype(np.uint16))
        for c in image.channels
    ]
    pages[0].save(path, save_all=True, append_images=pages[1:])


def save_label_map(labels: InstanceLabelMap, path):
    """16-bit single-channel label image (0 = background); PNG or TIFF."""
    raster = labels.raster
    if raster.max() > 65535:
        raise ValueError("label map exceeds 16-bit range")
    Image.fromarray(raster.astype(np.uint16)).save(path)


def load_label_map(path) -> InstanceLabelMap:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise FormatError(f"{path}: label maps must be single-channel")
    return InstanceLabelMap(arr.astype(np.int32))


def load_mask(path) -> BinaryMask:
    """Any nonzero pixel counts as foreground."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return BinaryMask(arr != 0)
