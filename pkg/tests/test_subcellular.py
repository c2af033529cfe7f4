import numpy as np
import pytest
from scipy import ndimage

from cellscreen.backend import SyntheticOracleBackend
from cellscreen.geometry import BinaryMask
from cellscreen.subcellular import (
    MIN_ENTITY_AREA,
    entities_per_cell,
    segment_subcellular,
)


def disc(shape, cx, cy, r):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


class TestSegmentSubcellular:
    def scene(self):
        ssm = np.zeros((40, 40))
        cell = BinaryMask(disc((40, 40), 20, 20, 12))
        ssm[disc((40, 40), 16, 20, 2)] = 0.95
        ssm[disc((40, 40), 25, 22, 1)] = 0.95
        ssm[disc((40, 40), 36, 36, 2)] = 0.95  # outside the cell
        return ssm, cell

    def test_entities_found_inside_cell(self):
        ssm, cell = self.scene()
        out = segment_subcellular(ssm, cell, cell_id=3, backend=SyntheticOracleBackend())
        assert len(out) == 2
        assert all(e.cell_id == 3 for e in out)
        for e in out:
            assert (e.mask.raster <= cell.raster).all()
            assert e.area == e.mask.area >= MIN_ENTITY_AREA

    def test_signal_outside_mask_ignored(self):
        ssm, cell = self.scene()
        out = segment_subcellular(ssm, cell, 1, SyntheticOracleBackend())
        union = np.zeros((40, 40), dtype=bool)
        for e in out:
            union |= e.mask.raster
        assert not union[34:, 34:].any()

    def test_min_area_filters_specks(self):
        ssm = np.zeros((30, 30))
        cell = BinaryMask(disc((30, 30), 15, 15, 10))
        ssm[15, 15] = 0.95  # single pixel: below MIN_ENTITY_AREA
        assert segment_subcellular(ssm, cell, 1, SyntheticOracleBackend()) == []
        assert segment_subcellular(ssm, cell, 1, SyntheticOracleBackend(), min_area=1) != []

    def test_empty_cell_mask(self):
        ssm = np.zeros((10, 10))
        empty = BinaryMask(np.zeros((10, 10), dtype=bool))
        assert segment_subcellular(ssm, empty, 1, SyntheticOracleBackend()) == []

    def test_entity_straddling_boundary_clipped(self):
        ssm = np.zeros((30, 30))
        cell = BinaryMask(disc((30, 30), 15, 15, 8))
        blob = disc((30, 30), 22, 15, 3)  # half in, half out
        ssm[blob] = 0.95
        out = segment_subcellular(ssm, cell, 1, SyntheticOracleBackend())
        assert len(out) == 1
        assert (out[0].mask.raster <= (blob & cell.raster)).all()
        assert out[0].area == int((blob & cell.raster).sum())

    def test_masks_within_full_image_coordinates(self):
        ssm, cell = self.scene()
        out = segment_subcellular(ssm, cell, 1, SyntheticOracleBackend())
        for e in out:
            assert e.mask.shape == (40, 40)
            # Reprojected mask matches the bright pixels it claims.
            assert (ssm[e.mask.raster] > 0.5).all()


class TestEntitiesPerCell:
    def test_counts_default_zero(self):
        ssm, cell = (np.zeros((20, 20)), BinaryMask(disc((20, 20), 10, 10, 6)))
        counts = entities_per_cell([], [1, 2, 3])
        assert counts == {1: 0, 2: 0, 3: 0}

    def test_counts_group_by_cell(self):
        from cellscreen.subcellular import SubcellularEntity

        m = BinaryMask(np.ones((4, 4), dtype=bool))
        entities = [
            SubcellularEntity(1, m, 16),
            SubcellularEntity(1, m, 16),
            SubcellularEntity(2, m, 16),
            SubcellularEntity(9, m, 16),  # not a retained cell: ignored
        ]
        assert entities_per_cell(entities, [1, 2]) == {1: 2, 2: 1}
