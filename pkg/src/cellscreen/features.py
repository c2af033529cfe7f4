"""Morphology, intensity, count, and correlation features per object.

Features are emitted at three levels (nucleus, cell, subcellular) into a
flat table keyed by (image_id, object_level, object_id). Nucleus rows of
retained cells share the cell's object id so level-spanning composites
join trivially; nuclei whose cell was lost or border-excluded are omitted,
matching the practice of not measuring incomplete cells.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from skimage.morphology import convex_hull_image

from .errors import EmptyMask, LayoutMismatch, ZeroVariance
from .geometry import BinaryMask, InstanceLabelMap, MultiChannelImage, mask_to_bbox
from .nuclei import PERIMETER_CORRECTION, mask_perimeter

# Second central moments of a pixel treated as a unit square add 1/12 per
# axis; without this a one-pixel-wide strip would degenerate to a segment.
_PIXEL_VAR = 1.0 / 12.0


@dataclass(frozen=True)
class RegionFeatures:
    area: float
    perimeter: float
    equivalent_diameter: float
    eccentricity: float
    solidity: float
    extent: float
    aspect_ratio: float
    circularity: float
    major_axis: float
    minor_axis: float


def region_props(mask: BinaryMask) -> RegionFeatures:
    """Morphological descriptors of one region."""
    if mask.area == 0:
        raise EmptyMask("cannot measure an empty region")
    area = float(mask.area)
    ys, xs = np.nonzero(mask.raster)
    bbox = mask_to_bbox(mask)

    # Ellipse with matching second central moments (pixel-square convention).
    mxx = xs.var() + _PIXEL_VAR
    myy = ys.var() + _PIXEL_VAR
    mxy = float(np.mean((xs - xs.mean()) * (ys - ys.mean())))
    common = math.sqrt((mxx - myy) ** 2 + 4.0 * mxy**2)
    lam1 = (mxx + myy + common) / 2.0
    lam2 = (mxx + myy - common) / 2.0
    major = 4.0 * math.sqrt(max(lam1, 0.0))
    minor = 4.0 * math.sqrt(max(lam2, 0.0))
    eccentricity = math.sqrt(1.0 - lam2 / lam1) if lam1 > 0 else 0.0

    perimeter = float(mask_perimeter(mask)) * PERIMETER_CORRECTION
    hull_area = float(convex_hull_image(mask.raster).sum())
    long_side = max(bbox.width, bbox.height)
    short_side = min(bbox.width, bbox.height)
    return RegionFeatures(
        area=area,
        perimeter=perimeter,
        equivalent_diameter=2.0 * math.sqrt(area / math.pi),
        eccentricity=eccentricity,
        solidity=area / hull_area,
        extent=area / bbox.area,
        aspect_ratio=long_side / short_side,
        circularity=4.0 * math.pi * area / perimeter**2,
        major_axis=major,
        minor_axis=minor,
    )


def intensity_stats(mask: BinaryMask, channel) -> dict:
    """Mean/min/max/std (population) of channel values over the mask."""
    if mask.area == 0:
        raise EmptyMask("cannot measure intensities over an empty mask")
    values = np.asarray(channel, dtype=np.float64)[mask.raster]
    return {
        "mean_intensity": float(values.mean()),
        "min_intensity": float(values.min()),
        "max_intensity": float(values.max()),
        "std_intensity": float(values.std()),
    }


def correlation_feature(nucleus_mask: BinaryMask, nucleus_channel, cell_marker_channel) -> float:
    """Pearson correlation of two channels over the nucleus mask."""
    if nucleus_mask.area < 2:
        raise EmptyMask("correlation needs at least two pixels")
    a = np.asarray(nucleus_channel, dtype=np.float64)[nucleus_mask.raster]
    b = np.asarray(cell_marker_channel, dtype=np.float64)[nucleus_mask.raster]
    if a.std() == 0.0 or b.std() == 0.0:
        raise ZeroVariance("constant signal over the nucleus mask")
    return float(np.corrcoef(a, b)[0, 1])


FEATURE_COLUMNS = [
    "area",
    "perimeter",
    "equivalent_diameter",
    "eccentricity",
    "solidity",
    "extent",
    "aspect_ratio",
    "circularity",
    "major_axis_length",
    "minor_axis_length",
    "mean_intensity",
    "min_intensity",
    "max_intensity",
    "std_intensity",
    "protein_correlation",
    "entities_per_cell",
    "parent_cell_id",
]

KEY_COLUMNS = ["image_id", "object_level", "object_id", "well_id"]
ALL_COLUMNS = KEY_COLUMNS + FEATURE_COLUMNS


class FeatureTable:
    """Flat feature rows with a stable schema and deterministic CSV form."""

    def __init__(self):
        self._rows = []
        self._keys = set()

    def add_row(self, image_id, object_level, object_id, well_id="", **features):
        key = (image_id, object_level, object_id)
        if key in self._keys:
            raise ValueError(f"duplicate feature row key {key}")
        unknown = set(features) - set(FEATURE_COLUMNS)
        if unknown:
            raise ValueError(f"unknown feature columns {sorted(unknown)}")
        for name, value in features.items():
            if value is not None and isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"non-finite value for {name}")
        self._keys.add(key)
        row = {c: None for c in FEATURE_COLUMNS}
        row.update(features)
        row.update(image_id=image_id, object_level=object_level,
                   object_id=object_id, well_id=well_id)
        self._rows.append(row)

    def rows(self, object_level=None) -> list[dict]:
        if object_level is None:
            return list(self._rows)
        return [r for r in self._rows if r["object_level"] == object_level]

    def __len__(self):
        return len(self._rows)

    def column(self, name, object_level=None) -> list:
        return [r[name] for r in self.rows(object_level)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ALL_COLUMNS)
        for row in self._rows:
            writer.writerow(
                ["" if row[c] is None else _format_cell(row[c]) for c in ALL_COLUMNS]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FeatureTable":
        reader = csv.DictReader(io.StringIO(text))
        table = cls()
        for raw in reader:
            features = {}
            for name in FEATURE_COLUMNS:
                value = raw.get(name, "")
                if value == "" or value is None:
                    features[name] = None
                elif name in ("entities_per_cell", "parent_cell_id"):
                    features[name] = int(value)
                else:
                    features[name] = float(value)
            table.add_row(
                raw["image_id"],
                raw["object_level"],
                int(raw["object_id"]),
                raw.get("well_id", ""),
                **features,
            )
        return table


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _morphology_columns(props: RegionFeatures) -> dict:
    return {
        "area": props.area,
        "perimeter": props.perimeter,
        "equivalent_diameter": props.equivalent_diameter,
        "eccentricity": props.eccentricity,
        "solidity": props.solidity,
        "extent": props.extent,
        "aspect_ratio": props.aspect_ratio,
        "circularity": props.circularity,
        "major_axis_length": props.major_axis,
        "minor_axis_length": props.minor_axis,
    }


def match_nuclei_to_labels(labels: InstanceLabelMap, nuclei) -> dict[int, object]:
    """Map each cell label to the nucleus record seeding it.

    A nucleus belongs to the label under its centroid pixel; when that
    pixel is background the label with maximal mask overlap is used.
    """
    mapping = {}
    raster = labels.raster
    for nucleus in nuclei:
        cx, cy = nucleus.center
        label = int(raster[int(round(cy)), int(round(cx))])
        if label == 0:
            overlaps = [(int((raster == lab).astype(np.int64)[nucleus.mask.raster].sum()), -lab)
                        for lab in labels.labels()]
            if overlaps:
                best = max(overlaps)
                if best[0] > 0:
                    label = -best[1]
        if label and label not in mapping:
            mapping[label] = nucleus
    return mapping


def extract_all(image: MultiChannelImage, labels: InstanceLabelMap, nuclei,
                entities, plate_layout=None) -> FeatureTable:
    """Build the full feature table for one image.

    Emits one row per retained cell, its nucleus, and each subcellular
    entity; entity counts appear as a cell-level column. Well ids are
    joined from the plate layout when one is given.
    """
    well_id = ""
    if plate_layout is not None:
        well_id = plate_layout.well_for_image(image.image_id)
        if well_id is None:
            raise LayoutMismatch(f"image {image.image_id!r} not in plate layout")

    nucleus_channel = image.nucleus_channel()
    cell_channels = image.channels_with_role("cell_marker")
    cell_channel = image.channels[cell_channels[0]] if cell_channels else None
    ssm_channel = image.subcellular_channel()

    by_label = match_nuclei_to_labels(labels, nuclei)
    entity_counts = {}
    for e in entities:
        entity_counts[e.cell_id] = entity_counts.get(e.cell_id, 0) + 1

    table = FeatureTable()
    for label in labels.labels():
        cell_mask = labels.mask_for(label)
        row = _morphology_columns(region_props(cell_mask))
        if cell_channel is not None:
            row.update(intensity_stats(cell_mask, cell_channel))
        row["entities_per_cell"] = entity_counts.get(label, 0)
        table.add_row(image.image_id, "cell", label, well_id, **row)

        nucleus = by_label.get(label)
        if nucleus is not None:
            nrow = _morphology_columns(region_props(nucleus.mask))
            if nucleus_channel is not None:
                nrow.update(intensity_stats(nucleus.mask, nucleus_channel))
            if nucleus_channel is not None and cell_channel is not None:
                try:
                    nrow["protein_correlation"] = correlation_feature(
                        nucleus.mask, nucleus_channel, cell_channel
                    )
                except (ZeroVariance, EmptyMask):
                    nrow["protein_correlation"] = None
            table.add_row(image.image_id, "nucleus", label, well_id, **nrow)

    for idx, entity in enumerate(entities, start=1):
        erow = _morphology_columns(region_props(entity.mask))
        if ssm_channel is not None:
            erow.update(intensity_stats(entity.mask, ssm_channel))
        erow["parent_cell_id"] = entity.cell_id
        table.add_row(image.image_id, "subcellular", idx, well_id, **erow)
    return table


def merge_tables(tables) -> FeatureTable:
    """Concatenate per-image tables into one (keys must stay unique)."""
    merged = FeatureTable()
    for table in tables:
        for row in table.rows():
            features = {k: row[k] for k in FEATURE_COLUMNS}
            merged.add_row(row["image_id"], row["object_level"], row["object_id"],
                           row["well_id"], **features)
    return merged
