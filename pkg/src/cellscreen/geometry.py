"""Raster primitives and geometry shared by every pipeline stage.

Conventions: origin at the top-left corner, x grows rightward (columns),
y grows downward (rows). Rasters are numpy arrays of shape ``(H, W)`` and
are indexed ``[y, x]``. Bounding boxes are half-open.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateBox, DimensionMismatch, EmptyMask

CHANNEL_ROLES = ("nucleus", "cell_marker", "subcellular_marker", "other")


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box: x0 <= x < x1, y0 <= y < y1."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DegenerateBox(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class PointPrompt:
    """A single point prompt with foreground/background polarity."""

    x: int
    y: int
    polarity: str = "foreground"

    def __post_init__(self):
        if self.polarity not in ("foreground", "background"):
            raise ValueError(f"unknown polarity {self.polarity!r}")

    @property
    def is_foreground(self) -> bool:
        return self.polarity == "foreground"


class BinaryMask:
    """Immutable 2-D boolean raster."""

    __slots__ = ("_raster", "_area")

    def __init__(self, raster):
        raster = np.asarray(raster, dtype=bool)
        if raster.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {raster.shape}")
        raster.setflags(write=False)
        self._raster = raster
        self._area = int(raster.sum())

    @property
    def raster(self) -> np.ndarray:
        return self._raster

    @property
    def area(self) -> int:
        return self._area

    @property
    def shape(self) -> tuple[int, int]:
        return self._raster.shape

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._raster, other._raster))

    def __hash__(self):
        return hash((self.shape, self._raster.tobytes()))

    def __repr__(self):
        return f"BinaryMask(shape={self.shape}, area={self.area})"

    def union(self, other: "BinaryMask") -> "BinaryMask":
        self._check_same_shape(other)
        return BinaryMask(self._raster | other._raster)

    def intersection(self, other: "BinaryMask") -> "BinaryMask":
        self._check_same_shape(other)
        return BinaryMask(self._raster & other._raster)

    def _check_same_shape(self, other: "BinaryMask"):
        if self.shape != other.shape:
            raise DimensionMismatch(f"mask shapes differ: {self.shape} vs {other.shape}")


class ScoreGrid:
    """Real-valued score raster with a monotone calibration to [0, 1].

    The default calibration clips scores to the unit interval, so scores
    at or below zero carry no foreground probability.
    """

    __slots__ = ("_raster",)

    def __init__(self, raster):
        raster = np.asarray(raster, dtype=np.float64)
        if raster.ndim != 2:
            raise DimensionMismatch(f"score grid must be 2-D, got shape {raster.shape}")
        if not np.all(np.isfinite(raster)):
            raise ValueError("score grid contains non-finite values")
        raster.setflags(write=False)
        self._raster = raster

    @property
    def raster(self) -> np.ndarray:
        return self._raster

    @property
    def shape(self) -> tuple[int, int]:
        return self._raster.shape

    def calibrated(self) -> np.ndarray:
        """Foreground probability in [0, 1] for every grid cell."""
        return np.clip(self._raster, 0.0, 1.0)

    def __repr__(self):
        return f"ScoreGrid(shape={self.shape})"


@dataclass(frozen=True)
class MultiChannelImage:
    """Multi-channel raster with a channel-role assignment.

    All channels share one ``(H, W)`` shape and intensities normalized to
    [0, 1]. Exactly one channel carries the ``nucleus`` role; at most one
    carries ``subcellular_marker``.
    """

    channels: tuple
    role_map: dict = field(default_factory=dict)
    image_id: str = ""

    def __post_init__(self):
        channels = tuple(np.asarray(c, dtype=np.float64) for c in self.channels)
        if not channels:
            raise DimensionMismatch("image needs at least one channel")
        shape = channels[0].shape
        for c in channels:
            if c.ndim != 2 or c.shape != shape:
                raise DimensionMismatch("all channels must share one 2-D shape")
            if c.min() < 0.0 or c.max() > 1.0:
                raise ValueError("channel intensities must lie in [0, 1]")
            c.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        roles = dict(self.role_map)
        for idx, role in roles.items():
            if role not in CHANNEL_ROLES:
                raise ValueError(f"unknown channel role {role!r}")
            if not 0 <= idx < len(channels):
                raise ValueError(f"role map references missing channel {idx}")
        if sum(1 for r in roles.values() if r == "nucleus") > 1:
            raise ValueError("at most one nucleus channel allowed")
        if sum(1 for r in roles.values() if r == "subcellular_marker") > 1:
            raise ValueError("at most one subcellular marker channel allowed")
        object.__setattr__(self, "role_map", roles)

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels[0].shape

    def channels_with_role(self, role: str) -> list[int]:
        return sorted(i for i, r in self.role_map.items() if r == role)

    def nucleus_channel(self) -> np.ndarray | None:
        idx = self.channels_with_role("nucleus")
        return self.channels[idx[0]] if idx else None

    def subcellular_channel(self) -> np.ndarray | None:
        idx = self.channels_with_role("subcellular_marker")
        return self.channels[idx[0]] if idx else None


class InstanceLabelMap:
    """Per-pixel instance assignment; 0 is background, labels are 1..K."""

    __slots__ = ("_raster",)

    def __init__(self, raster):
        raster = np.asarray(raster, dtype=np.int32)
        if raster.ndim != 2:
            raise DimensionMismatch(f"label map must be 2-D, got shape {raster.shape}")
        if raster.min() < 0:
            raise ValueError("labels must be non-negative")
        raster.setflags(write=False)
        self._raster = raster

    @property
    def raster(self) -> np.ndarray:
        return self._raster

    @property
    def shape(self) -> tuple[int, int]:
        return self._raster.shape

    def labels(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self._raster) if v != 0)

    def mask_for(self, label: int) -> BinaryMask:
        return BinaryMask(self._raster == label)

    def compacted(self) -> "InstanceLabelMap":
        """Relabel so the nonzero labels become contiguous 1..K, order kept."""
        out = np.zeros_like(self._raster)
        for new, old in enumerate(self.labels(), start=1):
            out[self._raster == old] = new
        return InstanceLabelMap(out)


def mask_to_bbox(m: BinaryMask) -> BoundingBox:
    """Tightest half-open box containing every true pixel."""
    if m.area == 0:
        raise EmptyMask("cannot compute bbox of an empty mask")
    ys, xs = np.nonzero(m.raster)
    return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def scale_bbox(b: BoundingBox, factor: float, bounds: tuple[int, int]) -> BoundingBox:
    """Scale a box about its center by ``factor`` and clip to image bounds.

    ``bounds`` is ``(H, W)`` to match raster shapes.
    """
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    h, w = bounds
    cx, cy = b.center
    half_w = b.width * factor / 2.0
    half_h = b.height * factor / 2.0
    x0 = int(np.floor(cx - half_w))
    x1 = int(np.ceil(cx + half_w))
    y0 = int(np.floor(cy - half_h))
    y1 = int(np.ceil(cy + half_h))
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w), min(y1, h)
    return BoundingBox(x0, y0, x1, y1)


def resample_score_grid(g: ScoreGrid, target_shape: tuple[int, int]) -> ScoreGrid:
    """Bilinear resampling (align-corners) to ``(H, W)``; no overshoot."""
    th, tw = target_shape
    if th <= 0 or tw <= 0:
        raise DimensionMismatch(f"target dims must be positive, got {(th, tw)}")
    sh, sw = g.shape
    if (sh, sw) == (th, tw):
        return g
    ys = np.linspace(0.0, sh - 1.0, th) if th > 1 else np.array([(sh - 1) / 2.0])
    xs = np.linspace(0.0, sw - 1.0, tw) if tw > 1 else np.array([(sw - 1) / 2.0])
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = ndimage.map_coordinates(g.raster, [yy, xx], order=1, mode="nearest")
    return ScoreGrid(out)


def pixels_on_border(m: BinaryMask) -> bool:
    """True iff any true pixel lies on the outermost row or column."""
    r = m.raster
    return bool(r[0, :].any() or r[-1, :].any() or r[:, 0].any() or r[:, -1].any())
