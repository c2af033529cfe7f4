"""Coverage-map voting and global instance resolution.

Iteration masks per cell become an integer coverage map; maps compete
per pixel, highest coverage wins (lowest cell id breaks ties), pixels
under the coverage fraction go to background, and border-touching cells
are removed last so they cannot release pixels to neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import BinaryMask, InstanceLabelMap


@dataclass(frozen=True)
class IntegrationConfig:
    coverage_fraction_min: float = 0.33

    def __post_init__(self):
        if not 0.0 < self.coverage_fraction_min <= 1.0:
            raise ValueError("coverage_fraction_min must be in (0, 1]")


@dataclass(frozen=True)
class CoverageMap:
    cell_id: int
    counts: np.ndarray
    total_iterations: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape


def build_coverage_map(iteration_masks, cell_id: int) -> CoverageMap:
    """Count, per pixel, how many iteration masks include it."""
    masks = list(iteration_masks)
    if not masks:
        raise ValueError("need at least one iteration mask")
    shape = masks[0].shape
    if any(m.shape != shape for m in masks):
        raise DimensionMismatch("iteration masks must share one shape")
    counts = np.zeros(shape, dtype=np.int32)
    for m in masks:
        counts += m.raster
    counts.setflags(write=False)
    return CoverageMap(cell_id=cell_id, counts=counts, total_iterations=len(masks))


def integrate_instances(maps, cfg: IntegrationConfig, image_shape) -> InstanceLabelMap:
    """Resolve per-cell coverage maps into one instance label map."""
    maps = sorted(maps, key=lambda m: m.cell_id)
    if not maps:
        return InstanceLabelMap(np.zeros(image_shape, dtype=np.int32))
    total = maps[0].total_iterations
    for m in maps:
        if m.shape != tuple(image_shape):
            raise DimensionMismatch("coverage map dims disagree with image")
        if m.total_iterations != total:
            raise DimensionMismatch("coverage maps disagree on iteration count")

    counts = np.stack([m.counts for m in maps]).astype(np.float64)
    eligible = counts / total >= cfg.coverage_fraction_min
    scores = np.where(eligible, counts, -1.0)
    winner = scores.argmax(axis=0)  # first max, so the lowest cell id wins ties
    assigned = scores.max(axis=0) >= 0
    ids = np.array([m.cell_id for m in maps], dtype=np.int32)
    labels = np.where(assigned, ids[winner], 0).astype(np.int32)
    return exclude_border_cells(InstanceLabelMap(labels))


def exclude_border_cells(labels: InstanceLabelMap) -> InstanceLabelMap:
    """Background any label touching the image border, then compact labels."""
    r = labels.raster
    border_labels = set(np.unique(np.concatenate([r[0, :], r[-1, :], r[:, 0], r[:, -1]])))
    border_labels.discard(0)
    if not border_labels:
        return labels.compacted()
    out = np.where(np.isin(r, sorted(border_labels)), 0, r)
    return InstanceLabelMap(out).compacted()


def coverage_mask(cmap: CoverageMap, cfg: IntegrationConfig) -> BinaryMask:
    """Pixels of one cell meeting the coverage fraction, ignoring neighbors."""
    return BinaryMask(cmap.counts / cmap.total_iterations >= cfg.coverage_fraction_min)
