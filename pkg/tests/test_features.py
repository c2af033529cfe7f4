import math

import numpy as np
import pytest

from cellscreen.errors import EmptyMask, ZeroVariance
from cellscreen.features import (
    FeatureTable,
    correlation_feature,
    extract_all,
    intensity_stats,
    match_nuclei_to_labels,
    merge_tables,
    region_props,
)
from cellscreen.geometry import BinaryMask, InstanceLabelMap, MultiChannelImage
from cellscreen.nuclei import NucleusRecord, ShapeStats
from cellscreen.subcellular import SubcellularEntity


def bm(raster):
    return BinaryMask(np.asarray(raster, dtype=bool))


def square(side, pad=3):
    return bm(np.pad(np.ones((side, side)), pad))


def disc(radius, pad=3):
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return bm(np.pad(xx**2 + yy**2 <= radius**2, pad))


class TestRegionProps:
    def test_square_exact_values(self):
        p = region_props(square(4))
        assert p.area == 16.0
        # 16 boundary edges, scaled by the pi/4 edge-count correction.
        assert p.perimeter == pytest.approx(16.0 * math.pi / 4)
        assert p.extent == 1.0
        assert p.solidity == 1.0
        assert p.aspect_ratio == 1.0
        assert p.eccentricity == 0.0
        assert p.circularity == pytest.approx(4 / math.pi)
        assert p.major_axis == pytest.approx(p.minor_axis)

    def test_equivalent_diameter_identity(self):
        for mask in (square(4), square(7), disc(5)):
            p = region_props(mask)
            assert p.equivalent_diameter**2 * math.pi / 4 == pytest.approx(
                p.area, abs=1e-9
            )

    def test_strip_eccentricity(self):
        # 1x10 strip: variances (8.25 + 1/12, 1/12) give e = sqrt(1 - 0.01).
        r = np.zeros((7, 16), dtype=bool)
        r[3, 3:13] = True
        p = region_props(bm(r))
        assert p.eccentricity == pytest.approx(math.sqrt(0.99), abs=1e-12)
        assert p.major_axis == pytest.approx(4 * math.sqrt(8.25 + 1 / 12))
        assert p.minor_axis == pytest.approx(4 * math.sqrt(1 / 12))
        assert p.aspect_ratio == 10.0

    def test_disc_circularity_near_one(self):
        p = region_props(disc(20))
        assert 0.9 <= p.circularity <= 1.1
        # Corrected perimeter tracks the true circumference.
        assert p.perimeter == pytest.approx(2 * math.pi * 20, rel=0.05)

    def test_scale_consistency_on_discs(self):
        small, big = region_props(disc(10)), region_props(disc(20))
        assert big.area == pytest.approx(4 * small.area, rel=0.05)
        assert big.perimeter == pytest.approx(2 * small.perimeter, rel=0.05)

    def test_concavity_lowers_solidity(self):
        r = np.ones((6, 6), dtype=bool)
        r[0:3, 3:6] = False  # L-shape
        p = region_props(bm(np.pad(r, 2)))
        assert p.solidity < 1.0
        assert p.extent == pytest.approx(27 / 36)

    def test_rotation_invariance(self):
        r = np.zeros((20, 20), dtype=bool)
        r[4:9, 3:15] = True
        r[9:12, 3:7] = True
        a = region_props(bm(r))
        b = region_props(bm(np.rot90(r).copy()))
        for name in ("area", "perimeter", "eccentricity", "solidity",
                     "extent", "aspect_ratio", "circularity",
                     "major_axis", "minor_axis"):
            assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-9)

    def test_empty_region_rejected(self):
        with pytest.raises(EmptyMask):
            region_props(bm(np.zeros((4, 4))))


class TestIntensityStats:
    def test_ramp(self):
        channel = np.linspace(0, 1, 16).reshape(4, 4)
        mask = bm(np.ones((4, 4)))
        s = intensity_stats(mask, channel)
        assert s["mean_intensity"] == pytest.approx(0.5)
        assert s["min_intensity"] == 0.0
        assert s["max_intensity"] == 1.0
        assert s["std_intensity"] == pytest.approx(np.linspace(0, 1, 16).std())

    def test_masked_subset(self):
        channel = np.zeros((3, 3))
        channel[1, 1] = 0.8
        mask = bm([[0, 0, 0], [0, 1, 0], [0, 0, 0]])
        s = intensity_stats(mask, channel)
        assert s == {
            "mean_intensity": 0.8,
            "min_intensity": 0.8,
            "max_intensity": 0.8,
            "std_intensity": 0.0,
        }


class TestCorrelation:
    def test_perfect_positive(self):
        mask = bm(np.ones((2, 3)))
        a = np.arange(6.0).reshape(2, 3) / 10
        assert correlation_feature(mask, a, 0.2 + 0.5 * a) == pytest.approx(1.0)

    def test_perfect_negative(self):
        mask = bm(np.ones((2, 3)))
        a = np.arange(6.0).reshape(2, 3) / 10
        assert correlation_feature(mask, a, 0.9 - a) == pytest.approx(-1.0)

    def test_constant_channel_rejected(self):
        mask = bm(np.ones((2, 2)))
        with pytest.raises(ZeroVariance):
            correlation_feature(mask, np.full((2, 2), 0.3), np.eye(2) * 0.5)


class TestFeatureTable:
    def test_csv_round_trip_exact(self):
        t = FeatureTable()
        t.add_row("img_0", "cell", 1, "B02", area=16.0, circularity=math.pi / 4,
                  entities_per_cell=3)
        t.add_row("img_0", "nucleus", 1, "B02", area=9.0,
                  protein_correlation=-0.12345678901234567)
        back = FeatureTable.from_csv(t.to_csv())
        assert back.rows() == t.rows()
        assert back.to_csv() == t.to_csv()

    def test_duplicate_key_rejected(self):
        t = FeatureTable()
        t.add_row("img_0", "cell", 1)
        with pytest.raises(ValueError):
            t.add_row("img_0", "cell", 1)

    def test_unknown_column_rejected(self):
        t = FeatureTable()
        with pytest.raises(ValueError):
            t.add_row("img_0", "cell", 1, bogus=1.0)

    def test_non_finite_rejected(self):
        t = FeatureTable()
        with pytest.raises(ValueError):
            t.add_row("img_0", "cell", 1, area=float("nan"))

    def test_column_filtering(self):
        t = FeatureTable()
        t.add_row("a", "cell", 1, area=5.0)
        t.add_row("a", "nucleus", 1, area=2.0)
        assert t.column("area", object_level="cell") == [5.0]

    def test_merge_tables(self):
        t1, t2 = FeatureTable(), FeatureTable()
        t1.add_row("a", "cell", 1, area=1.0)
        t2.add_row("b", "cell", 1, area=2.0)
        merged = merge_tables([t1, t2])
        assert len(merged) == 2
        with pytest.raises(ValueError):
            merge_tables([t1, t1])


def make_nucleus(record_id, raster):
    mask = bm(raster)
    ys, xs = np.nonzero(mask.raster)
    return NucleusRecord(
        id=record_id,
        mask=mask,
        center=(float(xs.mean()), float(ys.mean())),
        stats=ShapeStats(float(mask.area), 1.0, 0.8),
    )


class TestMatchNuclei:
    def test_centroid_pixel_rules(self):
        labels = np.zeros((8, 8), dtype=np.int32)
        labels[1:4, 1:4] = 1
        labels[5:8, 5:8] = 2
        n1 = np.zeros((8, 8)); n1[2, 2] = 1
        n2 = np.zeros((8, 8)); n2[6, 6] = 1
        mapping = match_nuclei_to_labels(
            InstanceLabelMap(labels), [make_nucleus(1, n1), make_nucleus(2, n2)]
        )
        assert mapping[1].id == 1
        assert mapping[2].id == 2

    def test_falls_back_to_overlap(self):
        labels = np.zeros((8, 8), dtype=np.int32)
        labels[1:4, 1:6] = 1
        labels[2, 3] = 0  # hole right under the centroid
        n = np.zeros((8, 8)); n[1:4, 2:5] = 1
        mapping = match_nuclei_to_labels(InstanceLabelMap(labels), [make_nucleus(1, n)])
        assert mapping[1].id == 1

    def test_orphan_nucleus_unmatched(self):
        labels = InstanceLabelMap(np.zeros((8, 8), dtype=np.int32))
        n = np.zeros((8, 8)); n[2:4, 2:4] = 1
        assert match_nuclei_to_labels(labels, [make_nucleus(1, n)]) == {}


class TestExtractAll:
    def make_fixture(self):
        nucleus_ch = np.zeros((12, 12))
        cell_ch = np.zeros((12, 12))
        ssm_ch = np.zeros((12, 12))
        labels = np.zeros((12, 12), dtype=np.int32)
        labels[2:7, 2:7] = 1
        labels[8:11, 8:11] = 2
        cell_ch[labels > 0] = 0.7
        n1 = np.zeros((12, 12)); n1[3:5, 3:5] = 1
        nucleus_ch[n1 > 0] = np.linspace(0.5, 0.9, 4)
        cell_ch[3, 3] = 0.75  # avoid zero variance under the nucleus
        e1 = np.zeros((12, 12), dtype=bool); e1[5:7, 5:7] = True
        ssm_ch[e1] = 0.95
        image = MultiChannelImage(
            (nucleus_ch, cell_ch, ssm_ch),
            {0: "nucleus", 1: "cell_marker", 2: "subcellular_marker"},
            image_id="img_0",
        )
        nuclei = [make_nucleus(1, n1)]
        entities = [SubcellularEntity(cell_id=1, mask=BinaryMask(e1), area=4)]
        return image, InstanceLabelMap(labels), nuclei, entities

    def test_row_structure(self):
        image, labels, nuclei, entities = self.make_fixture()
        table = extract_all(image, labels, nuclei, entities)
        assert len(table.rows("cell")) == 2
        assert len(table.rows("nucleus")) == 1  # cell 2 has no nucleus record
        assert len(table.rows("subcellular")) == 1

    def test_entity_counts_on_cells(self):
        image, labels, nuclei, entities = self.make_fixture()
        table = extract_all(image, labels, nuclei, entities)
        counts = {r["object_id"]: r["entities_per_cell"] for r in table.rows("cell")}
        assert counts == {1: 1, 2: 0}

    def test_nucleus_row_shares_cell_id(self):
        image, labels, nuclei, entities = self.make_fixture()
        table = extract_all(image, labels, nuclei, entities)
        nrow = table.rows("nucleus")[0]
        assert nrow["object_id"] == 1
        assert nrow["area"] == 4.0
        assert nrow["protein_correlation"] is not None

    def test_subcellular_parent_pointer(self):
        image, labels, nuclei, entities = self.make_fixture()
        table = extract_all(image, labels, nuclei, entities)
        srow = table.rows("subcellular")[0]
        assert srow["parent_cell_id"] == 1
        assert srow["mean_intensity"] == pytest.approx(0.95)
