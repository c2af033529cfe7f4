"""Subcellular entity segmentation inside resolved cell masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import SegmentationBackend
from .geometry import BinaryMask, mask_to_bbox

# Single-pixel detections are indistinguishable from noise.
MIN_ENTITY_AREA = 2


@dataclass(frozen=True)
class SubcellularEntity:
    cell_id: int
    mask: BinaryMask  # full-image coordinates
    area: int


def segment_subcellular(ssm_channel, cell_mask: BinaryMask, cell_id: int,
                        backend: SegmentationBackend,
                        min_area: int = MIN_ENTITY_AREA) -> list[SubcellularEntity]:
    """Detect entities on the subcellular channel within one cell mask.

    The cell's bounding box is cropped from the channel with out-of-mask
    pixels zeroed, automatic mask generation runs on the crop, and the
    resulting masks are reprojected and intersected with the cell mask.
    """
    ssm_channel = np.asarray(ssm_channel, dtype=np.float64)
    if cell_mask.area == 0:
        return []
    bbox = mask_to_bbox(cell_mask)
    crop = ssm_channel[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1].copy()
    crop[~cell_mask.raster[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1]] = 0.0

    entities = []
    for res in backend.generate_masks_auto(crop):
        full = np.zeros(ssm_channel.shape, dtype=bool)
        full[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1] = res.mask.raster
        projected = BinaryMask(full & cell_mask.raster)
        if projected.area >= min_area:
            entities.append(SubcellularEntity(cell_id=cell_id, mask=projected, area=projected.area))
    return entities


def entities_per_cell(entities, cells) -> dict[int, int]:
    """Entity count per retained cell id; cells without entities count 0."""
    counts = {int(cell_id): 0 for cell_id in cells}
    for e in entities:
        if e.cell_id in counts:
            counts[e.cell_id] += 1
    return counts
