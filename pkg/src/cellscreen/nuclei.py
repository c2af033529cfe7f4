"""Nuclei detection: automatic mask generation plus shape-statistics filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import SegmentationBackend
from .errors import EmptyMask, NoNucleusChannel
from .geometry import BinaryMask, MultiChannelImage, mask_to_bbox

# Discretization inflates the perimeter of small regions, so circularity is
# allowed to exceed 1 by this slack.
CIRCULARITY_SLACK = 0.1

# Cauchy-Crofton factor: the axis-aligned boundary edge count overestimates
# the geometric perimeter of smooth shapes by 4/pi (a digital disc has edge
# count 8r against circumference 2*pi*r), so scale by pi/4 before computing
# circularity.
PERIMETER_CORRECTION = np.pi / 4.0


@dataclass(frozen=True)
class ShapeStats:
    area: float
    aspect_ratio: float
    circularity: float


@dataclass(frozen=True)
class NucleusRecord:
    id: int
    mask: BinaryMask
    center: tuple[float, float]
    stats: ShapeStats


def compute_center(m: BinaryMask) -> tuple[float, float]:
    """Arithmetic centroid (x, y) of the true pixels."""
    if m.area == 0:
        raise EmptyMask("cannot compute the centroid of an empty mask")
    ys, xs = np.nonzero(m.raster)
    return (float(xs.mean()), float(ys.mean()))


def mask_perimeter(m: BinaryMask) -> int:
    """Boundary length: count of true/false (or true/exterior) pixel edges."""
    r = m.raster
    padded = np.pad(r, 1, mode="constant", constant_values=False)
    edges = 0
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        neighbor = np.roll(padded, shift, axis=axis)
        edges += int((padded & ~neighbor).sum())
    return edges


def shape_stats(m: BinaryMask) -> ShapeStats:
    if m.area == 0:
        raise EmptyMask("cannot compute shape statistics of an empty mask")
    bbox = mask_to_bbox(m)
    long_side = max(bbox.width, bbox.height)
    short_side = min(bbox.width, bbox.height)
    perimeter = mask_perimeter(m) * PERIMETER_CORRECTION
    return ShapeStats(
        area=float(m.area),
        aspect_ratio=long_side / short_side,
        circularity=4.0 * np.pi * m.area / perimeter**2,
    )


def filter_by_shape(candidates):
    """Drop statistical outliers from a candidate population.

    A candidate is discarded when any of area, aspect ratio, or circularity
    deviates from the population median by more than two standard
    deviations. Populations of two or fewer are returned unfiltered.
    """
    candidates = list(candidates)
    if len(candidates) <= 2:
        return candidates
    stats = np.array(
        [[s.area, s.aspect_ratio, s.circularity] for _, s in candidates]
    )
    med = np.median(stats, axis=0)
    sd = stats.std(axis=0)
    keep = np.all(np.abs(stats - med) <= 2.0 * sd, axis=1)
    return [c for c, k in zip(candidates, keep) if k]


def detect_nuclei(image: MultiChannelImage, backend: SegmentationBackend) -> list[NucleusRecord]:
    """Detect nuclei on the nucleus channel and emit validated seed records.

    Ids are assigned in raster (row-major) order of the centroid, so output
    is deterministic regardless of backend candidate order.
    """
    channel = image.nucleus_channel()
    if channel is None:
        raise NoNucleusChannel(f"image {image.image_id!r} has no nucleus channel")
    candidates = [
        (res.mask, shape_stats(res.mask))
        for res in backend.generate_masks_auto(channel)
        if res.mask.area > 0
    ]
    kept = filter_by_shape(candidates)
    with_centers = [(mask, stats, compute_center(mask)) for mask, stats in kept]
    with_centers.sort(key=lambda t: (t[2][1], t[2][0]))
    return [
        NucleusRecord(id=i, mask=mask, center=center, stats=stats)
        for i, (mask, stats, center) in enumerate(with_centers, start=1)
    ]
