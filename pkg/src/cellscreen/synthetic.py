"""Deterministic synthetic microscopy scenes with known ground truth.

Scenes contain non-touching disc/annulus cells with centered nucleus
discs and optional subcellular puncta, rendered so the oracle backend
segments them exactly. Every generator is a pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import InstanceLabelMap, MultiChannelImage

BACKGROUND = 0.05
NUCLEUS_VALUE = 0.9
CELL_RING_VALUE = 0.85
CELL_INTERIOR_VALUE = 0.62
CELL_DISC_VALUE = 0.8
PUNCTUM_VALUE = 0.95

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SyntheticScene:
    image: MultiChannelImage
    cell_labels: InstanceLabelMap  # ground truth
    nucleus_centers: tuple
    cell_radii: tuple
    entity_counts: dict


def _disc(shape, cx, cy, radius):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2


def _place_cells(rng, shape, n_cells, r_lo, r_hi, margin=4):
    h, w = shape
    placed = []
    attempts = 0
    while len(placed) < n_cells and attempts < 2000:
        attempts += 1
        rc = int(rng.integers(r_lo, r_hi + 1))
        cx = int(rng.integers(rc + margin, w - rc - margin))
        cy = int(rng.integers(rc + margin, h - rc - margin))
        if all((cx - px) ** 2 + (cy - py) ** 2 > (rc + pr + 3) ** 2 for px, py, pr in placed):
            placed.append((cx, cy, rc))
    return placed


def _render(shape, cells, rng, annulus_prob=0.4, with_entities=True, image_id="scene"):
    """Render channels + ground truth for a list of (cx, cy, rc) cells."""
    nucleus_ch = np.full(shape, BACKGROUND)
    cell_ch = np.full(shape, BACKGROUND)
    ssm_ch = np.zeros(shape)
    gt = np.zeros(shape, dtype=np.int32)
    centers, radii = [], []
    entity_counts = {}

    # One nucleus radius per scene: identical nuclei have zero statistic
    # spread, so the outlier filter keeps them all.
    rn = 6
    for label, (cx, cy, rc) in enumerate(cells, start=1):
        body = _disc(shape, cx, cy, rc)
        if rng.random() < annulus_prob:
            interior = _disc(shape, cx, cy, int(round(0.55 * rc)))
            cell_ch[body] = CELL_RING_VALUE
            cell_ch[body & interior] = CELL_INTERIOR_VALUE
        else:
            cell_ch[body] = CELL_DISC_VALUE
        nucleus_ch[_disc(shape, cx, cy, rn)] = NUCLEUS_VALUE
        gt[body] = label
        centers.append((cx, cy))
        radii.append(rc)

        count = 0
        if with_entities:
            for _ in range(int(rng.integers(1, 4))):
                angle = rng.random() * 2 * np.pi
                dist = rng.random() * 0.45 * rc
                px = int(round(cx + dist * np.cos(angle)))
                py = int(round(cy + dist * np.sin(angle)))
                punctum = _disc(shape, px, py, 1)
                if not (ssm_ch[punctum] > 0).any():
                    ssm_ch[punctum] = PUNCTUM_VALUE
                    count += 1
        entity_counts[label] = count

    image = MultiChannelImage(
        channels=(nucleus_ch, cell_ch, ssm_ch),
        role_map={0: "nucleus", 1: "cell_marker", 2: "subcellular_marker"},
        image_id=image_id,
    )
    return SyntheticScene(
        image=image,
        cell_labels=InstanceLabelMap(gt),
        nucleus_centers=tuple(centers),
        cell_radii=tuple(radii),
        entity_counts=entity_counts,
    )


def generate_scene(seed: int, shape=(160, 160), n_cells=None, with_entities=True,
                   image_id=None) -> SyntheticScene:
    """One scene of 3-8 disjoint cells with known ground truth."""
    rng = np.random.default_rng(seed)
    if n_cells is None:
        n_cells = int(rng.integers(3, 9))
    cells = _place_cells(rng, shape, n_cells, r_lo=11, r_hi=15)
    return _render(shape, cells, rng, with_entities=with_entities,
                   image_id=image_id or f"scene_{seed:04d}")


def generate_touching_pair(seed: int, shape=(96, 96)) -> SyntheticScene:
    """Two cells whose bodies touch but remain 4-connectivity disjoint."""
    rng = np.random.default_rng(seed)
    # Radii small enough that the neighboring nucleus center stays inside
    # the 3x nucleus bounding box, so the repulsive prompt is in range.
    r1 = int(rng.integers(7, 9))
    r2 = int(rng.integers(7, 9))
    h, w = shape
    cy = h // 2 + int(rng.integers(-4, 5))
    distance = r1 + r2  # grown below until the discs separate
    while True:
        cx1 = (w - distance) // 2
        cx2 = cx1 + distance
        union = _disc(shape, cx1, cy, r1) | _disc(shape, cx2, cy, r2)
        _, count = ndimage.label(union, structure=_FOUR_CONN)
        if count == 2:
            break
        distance += 1
    return _render(shape, [(cx1, cy, r1), (cx2, cy, r2)], rng, annulus_prob=0.0,
                   with_entities=False, image_id=f"touching_{seed:04d}")


def generate_plate(seed: int, n_images: int = 20, **kwargs) -> list[SyntheticScene]:
    """A plate of scenes; scene i uses sub-seed seed*10000 + i."""
    return [
        generate_scene(seed * 10_000 + i, image_id=f"img_{i:03d}", **kwargs)
        for i in range(n_images)
    ]


def hill_response(concentration, s0, s_inf, ec50, n):
    return s0 + (s_inf - s0) / (1.0 + (ec50 / concentration) ** n)


def make_hitval_fixture(seed: int, ec50: float = 1e-6, hill_n: float = 1.2,
                        s0: float = 0.1, s_inf: float = 0.9,
                        n_concentrations: int = 8, cells_per_well: int = 12,
                        noise_sd: float = 0.002):
    """A plate layout plus feature table whose readout follows a Hill curve.

    Returns (layout, table, concentrations). Control wells sit at the curve
    extremes; compound wells cover a log-spaced titration of ``CPD1``.
    """
    from .analytics import PlateLayout, Well
    from .features import FeatureTable

    rng = np.random.default_rng(seed)
    concentrations = np.logspace(np.log10(ec50) - 2.5, np.log10(ec50) + 2.5, n_concentrations)

    wells = []
    for i in range(4):
        wells.append(Well(f"N{i + 1:02d}", "neutral_control", image_ids=(f"imgN{i}",)))
        wells.append(Well(f"P{i + 1:02d}", "positive_control", image_ids=(f"imgP{i}",)))
    for i, conc in enumerate(concentrations):
        wells.append(Well(f"C{i + 1:02d}", "compound", compound_id="CPD1",
                          concentration=float(conc), image_ids=(f"imgC{i}",)))
    layout = PlateLayout(wells)

    table = FeatureTable()
    object_id = 0
    for well in wells:
        if well.role == "neutral_control":
            level = s0
        elif well.role == "positive_control":
            level = s_inf
        else:
            level = hill_response(well.concentration, s0, s_inf, ec50, hill_n)
        for _ in range(cells_per_well):
            object_id += 1
            value = float(np.clip(level + rng.normal(0.0, noise_sd), 0.0, 1.0))
            spread = float(np.clip(value * 0.5 + rng.normal(0.0, noise_sd), 0.0, 1.0))
            table.add_row(well.image_ids[0], "cell", object_id, well.well_id,
                          mean_intensity=value, extent=spread, area=100.0 + object_id % 7)
            table.add_row(well.image_ids[0], "nucleus", object_id, well.well_id,
                          mean_intensity=1.0 - value,
                          protein_correlation=float(np.clip(
                              2.0 * value - 1.0 + rng.normal(0.0, noise_sd), -1.0, 1.0)))
    return layout, table, concentrations
