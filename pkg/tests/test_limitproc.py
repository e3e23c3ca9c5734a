"""
Test module for the limit point process, overlap functionals and their checks.
"""

import logging
import math
from fractions import Fraction
from unittest.mock import patch

import numpy as np
import pytest

from dgff_lab.constants import BETA_C
from dgff_lab.decorations import ConstantDecoration, DgffBallDecoration, TwoSiteDecoration
from dgff_lab.errors import EmptyConfigurationError, EnumerationBudgetError, TruncationError
from dgff_lab.limitproc import (
    PointConfiguration,
    TruncationPolicy,
    c_beta,
    check_truncation,
    decoration_sensitivity,
    dominance_report,
    heat_bath_diagnostics,
    overlap_functional,
    pd_second_moment,
    pd_weights,
    perturbed_inner_product,
    q_at_infinity,
    required_truncation,
    sample_nonempty_ppp,
    sample_ppp,
    sample_Q,
    sample_Q_rem,
    sample_Y,
    strictness_expected,
    tail_mean_bound,
    theorem2_gap,
    top_weight,
    truncation_ledger,
    verify_shift,
)
from dgff_lab.rng import make_stream
from dgff_lab.runners import PoolRunner

# keeps atom counts around 60 for beta between 3.5 and 5
LOOSE = TruncationPolicy(eps=0.2)

HALF = Fraction(1, 2)


class TestTruncation:
    """Truncation levels and their ledger."""

    def test_required_levels(self):
        assert required_truncation([BETA_C + 1.0], TruncationPolicy("mean")) == 12.0
        # the mean bound dominates; the compensated deviation bound alone would allow L = 5
        assert required_truncation([BETA_C + 1.0]) == 12.0

    def test_loose_level(self):
        assert required_truncation([3.5, 5.0], LOOSE) == 2.0

    def test_required_is_admissible(self):
        policy = TruncationPolicy("mean", 1e-4)
        level = required_truncation([3.0, 4.0], policy)
        check_truncation([3.0, 4.0], level, policy)

    def test_too_shallow(self):
        with pytest.raises(TruncationError, match="need L >= 12"):
            check_truncation([BETA_C + 1.0], 3.0, TruncationPolicy())

    def test_compensated_level_above_deviation_bound_is_refused(self):
        # tail_sd is 6e-6 here, but the neglected mean mass is 7e-3
        with pytest.raises(TruncationError, match="tail_mean bound"):
            check_truncation([3.5], 5.0, TruncationPolicy())

    @pytest.mark.parametrize("mode", ["compensated", "mean"])
    @pytest.mark.parametrize("eps", [1e-5, 1e-3, 0.2])
    def test_accepted_levels_bound_the_mean_tail(self, mode, eps):
        policy = TruncationPolicy(mode, eps)
        betas = [3.0, 3.5, 2.0 * BETA_C, 6.0]
        level = required_truncation(betas, policy)
        check_truncation(betas, level, policy)
        for beta in betas:
            assert tail_mean_bound(beta, level) <= eps

    def test_beta_at_critical(self):
        with pytest.raises(ValueError, match="beta_c"):
            required_truncation([BETA_C])

    def test_invalid_policy(self):
        with pytest.raises(ValueError, match="Unknown truncation policy"):
            TruncationPolicy("median")
        with pytest.raises(ValueError, match="positive"):
            TruncationPolicy(eps=0.0)

    def test_ledger(self):
        ledger = truncation_ledger([4.0, 3.0, 4.0], 2.0, LOOSE)
        assert ledger["L"] == 2.0
        assert ledger["policy"] == "compensated"
        assert list(ledger["bounds"]) == ["3", "4"]
        bound = ledger["bounds"]["3"]
        assert bound["tail_mean"] == pytest.approx(math.exp(-(3.0 - BETA_C) * 2.0) / (3.0 - BETA_C))
        assert bound["tail_sd"] == pytest.approx(
            math.sqrt(math.exp(-(6.0 - BETA_C) * 2.0) / (6.0 - BETA_C))
        )


class TestPointProcess:
    """Sampling of the truncated point process."""

    def test_atoms_above_level(self, rng):
        config = sample_ppp(2.0, rng)
        assert np.all(config.atoms >= -2.0)
        assert config.sorted_atoms()[0] == config.atoms.max()

    def test_count_mean(self):
        rng = make_stream(5, "ppp")
        counts = [sample_ppp(1.0, rng).count for _ in range(4000)]
        expected = math.exp(BETA_C) / BETA_C
        assert np.mean(counts) == pytest.approx(expected, abs=5.0 * math.sqrt(expected / 4000))

    def test_no_positive_atom(self):
        rng = make_stream(5, "ppp")
        empty = [not np.any(sample_ppp(2.0, rng).atoms > 0) for _ in range(5000)]
        assert np.mean(empty) == pytest.approx(math.exp(-1.0 / BETA_C), abs=0.03)

    def test_negative_level(self, rng):
        with pytest.raises(ValueError, match=">= 0"):
            sample_ppp(-1.0, rng)

    def test_nonempty_deepens(self, rng, caplog):
        empty = PointConfiguration(L=0.0, atoms=np.empty(0))
        full = PointConfiguration(L=1.0, atoms=np.array([0.3]))
        with patch("dgff_lab.limitproc.sample_ppp", side_effect=[empty, full]) as mock_sample:
            with caplog.at_level(logging.WARNING, logger="dgff_lab"):
                config = sample_nonempty_ppp(0.0, rng)
        assert config is full
        assert [c.args[0] for c in mock_sample.call_args_list] == [0.0, 1.0]
        assert "resampling with L=1" in caplog.text

    def test_nonempty_gives_up(self, rng):
        empty = PointConfiguration(L=0.0, atoms=np.empty(0))
        with patch("dgff_lab.limitproc.sample_ppp", return_value=empty):
            with pytest.raises(EmptyConfigurationError, match="5 attempts"):
                sample_nonempty_ppp(0.0, rng)

    def test_pd_weights(self, rng):
        weights = pd_weights(sample_nonempty_ppp(2.0, rng), 4.0)
        assert weights.sum() == pytest.approx(1.0)
        assert np.all(np.diff(weights) <= 0)

    def test_pd_weights_rejections(self):
        with pytest.raises(EmptyConfigurationError):
            pd_weights(PointConfiguration(L=1.0, atoms=np.empty(0)), 4.0)
        with pytest.raises(ValueError, match="beta_c"):
            pd_weights(PointConfiguration(L=1.0, atoms=np.array([0.0])), 2.0)


class TestOverlapFunctional:
    """Evaluation of Q on fixed atoms."""

    ATOMS = np.array([0.5, -0.25, 1.75])

    def test_single_atom(self):
        assert overlap_functional(np.array([-0.7]), 3.0, 5.0) == 1.0

    def test_empty(self):
        with pytest.raises(EmptyConfigurationError):
            overlap_functional(np.empty(0), 3.0, 5.0)

    def test_permutation_invariant(self):
        xb = np.array([0.1, 0.4, 0.2])
        xbp = np.array([0.3, 0.0, 0.5])
        order = [2, 0, 1]
        first = overlap_functional(self.ATOMS, 3.0, 5.0, xb, xbp)
        second = overlap_functional(self.ATOMS[order], 3.0, 5.0, xb[order], xbp[order])
        assert first == second

    def test_shift_invariant(self):
        assert overlap_functional(self.ATOMS + 2.0, 3.0, 5.0) == overlap_functional(self.ATOMS, 3.0, 5.0)

    def test_constant_decoration_cancels(self):
        xb = np.full(3, 0.8)
        assert overlap_functional(self.ATOMS, 3.0, 5.0, xb, xb) == overlap_functional(self.ATOMS, 3.0, 5.0)

    def test_known_value(self):
        atoms = np.array([0.0, -math.log(2.0)])
        # w = (2/3, 1/3) at beta = 1, w' = (4/5, 1/5) at beta' = 2
        assert overlap_functional(atoms, 1.0, 2.0) == pytest.approx(2.0 / 3.0 * 0.8 + 1.0 / 3.0 * 0.2)

    def test_in_unit_interval_with_dust(self, rng):
        atoms = sample_nonempty_ppp(2.0, rng).atoms
        value = overlap_functional(atoms, 3.5, 5.0, L=2.0)
        assert 0.0 < value <= 1.0

    def test_top_weight(self):
        atoms = np.array([0.0, -math.log(2.0)])
        assert top_weight(atoms, 1.0) == pytest.approx(2.0 / 3.0)
        assert top_weight(atoms[::-1], 1.0) == top_weight(atoms, 1.0)


class TestEstimates:
    """Monte Carlo laws of the overlap functionals."""

    def test_constant_model_matches_rem(self):
        estimate = sample_Q(3.5, 5.0, ConstantDecoration(1.0), None, 50, make_stream(7, "q"), LOOSE)
        assert np.array_equal(estimate.values, estimate.partner)
        assert estimate.partner_label == "Q_REM"
        assert estimate.ledger["L"] == 2.0
        assert np.all((estimate.values > 0) & (estimate.values <= 1))

    def test_q_rem_is_the_partner(self):
        model = TwoSiteDecoration([0.0, 2.0])
        q = sample_Q(3.5, 5.0, model, None, 30, make_stream(7, "q"), LOOSE)
        q_rem = sample_Q_rem(3.5, 5.0, None, 30, make_stream(7, "q"), LOOSE)
        assert np.array_equal(q.partner, q_rem.values)

    def test_independent_of_scheduling(self):
        model = TwoSiteDecoration([0.0, 2.0])
        serial = sample_Q(3.5, 5.0, model, None, 40, make_stream(7, "q"), LOOSE)
        pooled = sample_Q(3.5, 5.0, model, None, 40, make_stream(7, "q"), LOOSE, runner=PoolRunner(threads=4))
        assert np.array_equal(serial.values, pooled.values)

    def test_explicit_level_is_checked(self):
        with pytest.raises(TruncationError):
            sample_Q(3.5, 5.0, ConstantDecoration(1.0), 0.5, 10, make_stream(7, "q"), LOOSE)

    def test_invalid_replicates(self):
        with pytest.raises(ValueError, match="replicates"):
            sample_Q_rem(3.5, 5.0, None, 0, make_stream(7, "q"), LOOSE)

    def test_pd_second_moment(self):
        estimate = pd_second_moment(4.0, 2000, make_stream(8, "pd"), policy=LOOSE)
        assert estimate.label == "sum_w2"
        assert estimate.mean == pytest.approx(1.0 - BETA_C / 4.0, abs=0.05)

    def test_cdf(self):
        estimate = sample_Q_rem(3.5, 5.0, None, 20, make_stream(7, "q"), LOOSE)
        assert estimate.cdf([0.0, 1.0]).tolist() == [0.0, 1.0]

    def test_q_at_infinity_constant_model(self):
        estimate = q_at_infinity(4.0, ConstantDecoration(0.5), None, 100, make_stream(9, "inf"), LOOSE)
        assert np.array_equal(estimate.q.values, estimate.q_rem.values)
        assert estimate.max_violation == 0.0
        assert estimate.grid.size == estimate.cdf_q.size

    def test_dominance_report(self):
        report = dominance_report(
            3.5, 5.0, TwoSiteDecoration([0.0, 2.0]), None, 50, make_stream(9, "dom"), LOOSE
        )
        assert set(report) == {"grid", "cdf_q", "cdf_q_rem", "max_violation", "violation_se", "ledger"}
        assert np.all(np.diff(report["cdf_q"]) >= 0)
        assert report["max_violation"] >= 0.0


class TestGap:
    """Paired comparison of Q and Q_REM."""

    def test_constant_model_has_no_gap(self):
        report = theorem2_gap(3.5, 5.0, ConstantDecoration(1.0), None, 40, make_stream(10, "gap"), LOOSE)
        assert report.difference == 0.0
        assert report.pvalue == 1.0
        assert not report.significant()
        assert report.differences.shape == (40,)

    @pytest.mark.slow
    def test_random_decorations_lower_the_overlap(self):
        model = TwoSiteDecoration([0.0, 4.0])
        report = theorem2_gap(3.0, 6.0, model, None, 20_000, make_stream(10, "gap"), TruncationPolicy(eps=0.5))
        assert report.significant()


class TestCBetaAndY:
    """Tilted decoration statistics."""

    def test_constant_c_beta(self, rng):
        model = ConstantDecoration(1.0)
        estimate = c_beta(model, 3.0, 100, rng)
        assert estimate.value == pytest.approx(model.x_value(3.0))
        assert estimate.se == 0.0
        assert estimate.exact == model.exact_c_beta(3.0)

    def test_two_site_c_beta(self, rng):
        model = TwoSiteDecoration([0.0, 1.0, 3.0])
        estimate = c_beta(model, 3.0, 50_000, rng)
        assert abs(estimate.value - estimate.exact) <= 5.0 * estimate.se

    def test_y_of_single_gap(self, rng):
        model = TwoSiteDecoration([0.5])
        sample = sample_Y(model, 3.0, 4.0, 50, rng)
        expected = TwoSiteDecoration.x_of_gap(np.array([0.5]), 4.0) - TwoSiteDecoration.x_of_gap(np.array([0.5]), 3.0)
        np.testing.assert_allclose(sample.values, expected[0])
        assert sample.bank == 10_000

    def test_y_matches_tilted_law(self, rng):
        model = TwoSiteDecoration([0.0, 2.0])
        support, probs = model.tilted_law(3.0, 4.0)
        sample = sample_Y(model, 3.0, 4.0, 20_000, rng)
        assert np.mean(np.isclose(sample.values, support[0])) == pytest.approx(probs[0], abs=0.02)

    def test_small_bank_warns(self, rng, caplog):
        with caplog.at_level(logging.WARNING, logger="dgff_lab"):
            sample = sample_Y(TwoSiteDecoration([0.5]), 3.0, 4.0, 100, rng, bank=5)
        assert sample.ess == pytest.approx(5.0)
        assert "Effective sample size" in caplog.text

    def test_rejections(self, rng):
        with pytest.raises(ValueError, match="n must be"):
            sample_Y(ConstantDecoration(1.0), 3.0, 4.0, 0, rng)
        with pytest.raises(ValueError, match="beta_c"):
            sample_Y(ConstantDecoration(1.0), 2.0, 4.0, 10, rng)


class TestShift:
    """Decorating the atoms against shifting them by c_beta."""

    def test_constant_model_identity(self):
        report = verify_shift(3.5, ConstantDecoration(1.0), None, 500, make_stream(12, "shift"), LOOSE, c_samples=1000)
        assert report.pvalue > 1e-3
        assert report.c_beta == pytest.approx(ConstantDecoration(1.0).x_value(3.5))
        assert report.c_beta_se == 0.0
        assert report.joint is None

    def test_offset_control_fails(self):
        report = verify_shift(
            3.5, ConstantDecoration(1.0), None, 2000, make_stream(12, "shift"), LOOSE, offset=0.2, c_samples=1000
        )
        assert report.pvalue < 1e-3
        assert not report.passed
        assert report.offset == 0.2

    def test_joint_keys(self):
        report = verify_shift(
            3.5,
            ConstantDecoration(1.0),
            None,
            200,
            make_stream(12, "shift"),
            LOOSE,
            beta_prime=5.0,
            c_samples=1000,
        )
        assert set(report.joint) == {
            "first_marginal_pvalue",
            "second_marginal_pvalue",
            "correlation_pvalue",
            "y_ess",
        }
        assert report.joint["first_marginal_pvalue"] == report.pvalue


class TestInnerProduct:
    """The perturbed inner product and its strictness."""

    P = [Fraction(2, 3), Fraction(1, 3)]
    Q = [1, 0]

    def test_fraction_mode(self):
        report = perturbed_inner_product(self.P, self.Q, [1, 2], [HALF, HALF], mode="fraction")
        assert report.expectation == Fraction(79, 120)
        assert report.baseline == Fraction(2, 3)
        assert report.strict
        assert report.strictness_expected
        assert report.hypotheses_hold
        assert report.within_bound
        assert report.outcomes == 4

    def test_exact_mode(self):
        report = perturbed_inner_product(self.P, self.Q, [1, 2], [0.5, 0.5])
        assert report.expectation == pytest.approx(79.0 / 120.0, rel=1e-12)
        assert report.strict

    def test_mc_mode(self):
        report = perturbed_inner_product(
            self.P, self.Q, [1, 2], [0.5, 0.5], mode="mc", rng=make_stream(13, "ipp")
        )
        assert abs(report.expectation - 79.0 / 120.0) <= 5.0 * report.se
        assert report.outcomes == 100_000

    def test_constant_a_is_not_strict(self):
        report = perturbed_inner_product(self.P, self.Q, [1, 2], [1, 0], mode="fraction")
        assert report.expectation == report.baseline
        assert not report.strict
        assert not report.strictness_expected

    def test_constant_q_is_not_strict(self):
        report = perturbed_inner_product(self.P, [1, 1], [1, 2], [HALF, HALF], mode="fraction")
        assert report.expectation == 1
        assert not report.strict
        assert not strictness_expected([2 / 3, 1 / 3], [1, 1], [1, 2], [0.5, 0.5])

    def test_budget(self):
        p = [1.0 / 21] * 21
        with pytest.raises(EnumerationBudgetError, match="mode='mc'"):
            perturbed_inner_product(p, [0.0] * 21, [1, 2], [0.5, 0.5])

    def test_rejections(self):
        with pytest.raises(ValueError, match="Unknown mode"):
            perturbed_inner_product(self.P, self.Q, [1, 2], [0.5, 0.5], mode="sympy")
        with pytest.raises(ValueError, match="needs an rng"):
            perturbed_inner_product(self.P, self.Q, [1, 2], [0.5, 0.5], mode="mc")
        with pytest.raises(ValueError, match="nonincreasing"):
            perturbed_inner_product([1 / 3, 2 / 3], self.Q, [1, 2], [0.5, 0.5])
        with pytest.raises(ValueError, match="positive values"):
            perturbed_inner_product(self.P, self.Q, [0, 2], [0.5, 0.5])


class TestDecorationDiagnostics:
    """Window sensitivity and heat-bath self-consistency."""

    def test_sensitivity_grid(self, rng):
        rows = decoration_sensitivity(3.0, [1.0, 2.0], [1.0, 2.0], 32, rng, burn_in=5, sweeps=1)
        assert [(row["r"], row["R"]) for row in rows] == [(1.0, 1.0), (1.0, 2.0), (2.0, 2.0)]
        assert all(row["mean_x"] >= 0.0 for row in rows)

    def test_heat_bath(self):
        model = DgffBallDecoration(r=1.0, R=3.0, burn_in=10, chains=8)
        report = heat_bath_diagnostics(model, 40, make_stream(14, "heat"), zero_mean_draws=20_000)
        assert report.pooled.pvalue > 1e-3
        assert report.zero_mean_ok
        assert report.zero_mean_target == pytest.approx(math.sqrt(2.0 / math.pi))
        assert report.site_pvalues.size == report.truncated_sites.size
        assert report.updates == 40 * 8 * report.site_pvalues.size
