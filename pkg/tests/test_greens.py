"""
Test module for Green functions, potential kernel and Cholesky factors.
"""

import math

import numpy as np
import pytest

from dgff_lab.errors import DegenerateLatticeError, MatrixNotPositiveDefiniteError, ResourceCapError
from dgff_lab.greens import (
    GreenMatrix,
    cholesky,
    green_exact,
    green_growth,
    green_mc,
    green_to_csv,
    harmonicity_residual,
    overlap,
    overlap_table,
    potential_kernel,
    potential_kernel_asymptotic,
    potential_kernel_series,
)
from dgff_lab.lattice import DomainSpec, build_lattice
from dgff_lab.output import read_csv
from dgff_lab.rng import make_stream
from dgff_lab.runners import PoolRunner


class TestGreenExact:
    """Dense Green matrices."""

    def test_two_site_closed_form(self, two_site_green, two_site_g):
        np.testing.assert_allclose(two_site_green.values, two_site_g, rtol=1e-12)
        assert two_site_green.max_diag == pytest.approx(16.0 / 15.0, rel=1e-12)

    def test_single_site(self, single_site):
        np.testing.assert_allclose(green_exact(single_site).values, [[1.0]], rtol=1e-12)

    def test_symmetric_nonnegative_harmonic(self, square8):
        G = green_exact(square8)
        assert np.array_equal(G.values, G.values.T)
        assert np.all(G.values >= 0)
        assert harmonicity_residual(G) < 1e-10

    def test_read_only(self, two_site_green):
        with pytest.raises(ValueError):
            two_site_green.values[0, 0] = 0.0

    def test_site_cap(self, square8):
        with pytest.raises(ResourceCapError, match="above the dense cap of 10"):
            green_exact(square8, site_cap=10)

    def test_empty_lattice(self):
        lat = build_lattice(DomainSpec.disc((0.0, 0.0), 0.5), 1)
        with pytest.raises(DegenerateLatticeError):
            green_exact(lat)

    def test_growth_rows(self):
        rows = green_growth(DomainSpec.unit_square(), [4, 8])
        assert [r["N"] for r in rows] == [4, 8]
        for row in rows:
            assert row["growth"] == pytest.approx(row["max_diag"] - 2.0 / math.pi * math.log(row["N"]))

    def test_to_csv(self, two_site_green, tmp_path):
        rows = read_csv(green_to_csv(two_site_green, tmp_path / "green.csv"))
        assert len(rows) == 4
        assert float(rows[0]["value"]) == pytest.approx(16.0 / 15.0, rel=1e-12)
        assert float(rows[1]["value"]) == pytest.approx(4.0 / 15.0, rel=1e-12)


class TestOverlap:
    """Normalized covariances."""

    def test_two_site_overlap(self, two_site_green):
        assert overlap(two_site_green, 0, 1) == pytest.approx(0.25)
        assert overlap(two_site_green, (0, 0), (0, 0)) == pytest.approx(1.0)

    def test_table_in_unit_interval(self, square8):
        table = overlap_table(green_exact(square8))
        assert table.min() >= 0.0
        assert table.max() == pytest.approx(1.0)


class TestGreenMonteCarlo:
    """Random-walk estimates of a Green row."""

    def test_agrees_with_exact(self, two_site, two_site_green):
        estimate = green_mc(two_site, 0, 20000, make_stream(3, "walks"))
        assert np.all(np.abs(estimate.mean - two_site_green.values[0]) <= 5.0 * estimate.se)
        assert estimate.walks == 20000

    def test_start_by_site(self, two_site):
        estimate = green_mc(two_site, (1, 0), 100, make_stream(3, "walks"))
        assert estimate.site == 1
        # every walk visits its start at least once
        assert estimate.mean[1] >= 1.0

    def test_independent_of_scheduling(self, square8):
        serial = green_mc(square8, 12, 3000, make_stream(9, "walks"), chunk_size=500)
        pooled = green_mc(square8, 12, 3000, make_stream(9, "walks"), runner=PoolRunner(threads=4), chunk_size=500)
        assert np.array_equal(serial.mean, pooled.mean)
        assert np.array_equal(serial.se, pooled.se)

    def test_invalid_walks(self, two_site):
        with pytest.raises(ValueError, match="walks"):
            green_mc(two_site, 0, 0, make_stream(3, "walks"))


class TestPotentialKernel:
    """Exact values, asymptotics and the series oracle."""

    def test_known_values(self):
        assert potential_kernel((0, 0), R=4) == 0.0
        assert potential_kernel((1, 0), R=4) == pytest.approx(1.0, abs=1e-10)
        assert potential_kernel((1, 1), R=4) == pytest.approx(4.0 / math.pi, abs=1e-10)
        assert potential_kernel((2, 0), R=4) == pytest.approx(4.0 - 8.0 / math.pi, abs=1e-10)

    def test_symmetries(self):
        assert potential_kernel((2, 1), R=4) == potential_kernel((-1, 2), R=4)
        assert potential_kernel((3, -2), R=4) == potential_kernel((2, 3), R=4)

    def test_asymptotic_agreement(self):
        assert potential_kernel((10, 10), R=10) == pytest.approx(potential_kernel_asymptotic((10, 10)), abs=1e-3)

    def test_asymptotic_beyond_window(self):
        assert potential_kernel((40, 0), R=4) == potential_kernel_asymptotic((40, 0))

    def test_asymptotic_origin(self):
        with pytest.raises(ValueError, match="origin"):
            potential_kernel_asymptotic((0, 0))

    @pytest.mark.parametrize("site", [(1, 0), (1, 1)])
    def test_series_oracle(self, site):
        assert potential_kernel_series(site) == pytest.approx(potential_kernel(site, R=4), abs=1e-3)


class TestCholesky:
    """Factorization with the jitter retry."""

    def test_reconstructs(self, two_site_green, two_site_g):
        factor = cholesky(two_site_green)
        assert factor.jitter == 0.0
        np.testing.assert_allclose(factor.lower @ factor.lower.T, two_site_g, rtol=1e-12)

    def test_jitter_retry(self, two_site):
        singular = GreenMatrix(values=np.ones((2, 2)), lattice=two_site)
        factor = cholesky(singular)
        assert factor.jitter > 0.0

    def test_not_positive_definite(self, two_site):
        indefinite = GreenMatrix(values=np.array([[1.0, 2.0], [2.0, 1.0]]), lattice=two_site)
        with pytest.raises(MatrixNotPositiveDefiniteError):
            cholesky(indefinite)
