"""
Test module for lattice construction and site subsets.
"""

import logging

import numpy as np
import pytest

from dgff_lab.errors import DegenerateLatticeError
from dgff_lab.lattice import DomainSpec, boundary_count, box_partition, build_lattice, interior_mask, lattice_to_csv
from dgff_lab.output import read_csv


class TestDomainSpec:
    """Validation and labels of domain descriptions."""

    def test_unknown_shape(self):
        with pytest.raises(ValueError, match="Unknown domain shape"):
            DomainSpec(shape="triangle")

    def test_bad_annulus(self):
        with pytest.raises(ValueError, match="r_in < r_out"):
            DomainSpec.annulus((0.5, 0.5), 0.5, 0.2)

    def test_bad_disc(self):
        with pytest.raises(ValueError, match="radius"):
            DomainSpec.disc((0.0, 0.0), 0.0)

    def test_labels(self):
        assert DomainSpec.unit_square().label == "unit-square"
        assert DomainSpec.disc((0.5, 0.0), 2.0).label == "disc(center=(0.5,0),radius=2)"


class TestBuildLattice:
    """Sites, ordering and neighbor tables."""

    def test_unit_square_sites(self, square8):
        """Sites keep a margin greater than 1 from the boundary."""
        assert square8.size == 25
        assert square8.sites.min() == 2
        assert square8.sites.max() == 6
        assert tuple(square8.sites[0]) == (2, 2)
        assert tuple(square8.sites[-1]) == (6, 6)

    def test_lexicographic_order(self, square8):
        keys = square8.sites[:, 0] * 100 + square8.sites[:, 1]
        assert np.all(np.diff(keys) > 0)

    def test_two_site_fixture(self, two_site):
        assert two_site.sites.tolist() == [[0, 0], [1, 0]]
        # +x neighbor of site 0 is site 1, -x neighbor of site 1 is site 0
        assert two_site.neighbor_table[0, 0] == 1
        assert two_site.neighbor_table[1, 1] == 0
        assert two_site.degree_out.tolist() == [3, 3]
        assert two_site.neighbors == [[1], [0]]

    def test_single_site(self, single_site):
        assert single_site.size == 1
        assert single_site.degree_out.tolist() == [4]

    def test_index_lookup(self, two_site):
        assert two_site.index((1, 0)) == 1
        with pytest.raises(ValueError, match="not in lattice"):
            two_site.index((5, 5))

    def test_annulus_excludes_hole(self):
        lat = build_lattice(DomainSpec.annulus((0.5, 0.5), 0.2, 0.5), 16)
        distance = np.hypot(lat.sites[:, 0] - 8.0, lat.sites[:, 1] - 8.0)
        assert lat.size > 0
        assert np.all(distance > 0.2 * 16)
        assert np.all(distance < 0.5 * 16)

    def test_empty_lattice(self, caplog):
        """A domain too small for the margin gives a logged, empty lattice."""
        with caplog.at_level(logging.WARNING, logger="dgff_lab.lattice"):
            lat = build_lattice(DomainSpec.disc((0.0, 0.0), 0.5), 1)
        assert lat.is_empty
        assert lat.diameter == 0.0
        assert "has no sites" in caplog.text

    @pytest.mark.parametrize("N", [0, -3, 1.5])
    def test_invalid_scale(self, N):
        with pytest.raises(ValueError, match="positive integer"):
            build_lattice(DomainSpec.unit_square(), N)

    def test_lattice_id(self, square8):
        assert square8.lattice_id == "unit-square@N=8"

    def test_to_csv(self, two_site, tmp_path):
        rows = read_csv(lattice_to_csv(two_site, tmp_path / "lattice.csv"))
        assert [(r["x"], r["y"], r["degree_out"]) for r in rows] == [("0", "0", "3"), ("1", "0", "3")]


class TestSubsets:
    """Interior sets and box partitions."""

    def test_interior_threshold(self):
        lat = build_lattice(DomainSpec.unit_square(), 16)
        mask = interior_mask(lat, 0.5)
        assert mask.threshold == pytest.approx(4.0)
        assert 0 < mask.count < lat.size

    def test_interior_monotone_in_delta(self):
        """A smaller delta raises the threshold and shrinks the interior."""
        lat = build_lattice(DomainSpec.unit_square(), 16)
        assert interior_mask(lat, 0.25).issubset(interior_mask(lat, 0.5))

    def test_interior_invalid_delta(self, square8):
        with pytest.raises(ValueError, match="delta"):
            interior_mask(square8, 1.0)

    def test_interior_empty_lattice(self):
        lat = build_lattice(DomainSpec.disc((0.0, 0.0), 0.5), 1)
        with pytest.raises(DegenerateLatticeError):
            interior_mask(lat, 0.5)

    def test_boundary_count(self):
        lat = build_lattice(DomainSpec.unit_square(), 16)
        count, scale = boundary_count(lat, 0.5)
        assert count == lat.size - interior_mask(lat, 0.5).count
        assert scale == pytest.approx(16**1.5)

    def test_box_partition_covers_disjointly(self, square8):
        boxes = box_partition(square8, 2)
        stacked = np.array([b.mask for b in boxes])
        assert np.all(stacked.sum(axis=0) == 1)
        assert [b.cell for b in boxes] == sorted(b.cell for b in boxes)

    def test_box_partition_single_cell(self, square8):
        """A box of side 2N holds the whole lattice."""
        boxes = box_partition(square8, 16)
        assert len(boxes) == 1
        assert boxes[0].count == square8.size

    def test_box_partition_invalid_side(self, square8):
        with pytest.raises(ValueError, match="Box side"):
            box_partition(square8, 0)
