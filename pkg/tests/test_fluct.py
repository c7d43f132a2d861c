"""Fluctuation statistics: distributions, relations, bounds, ceilings."""
import math

import numpy as np
import pytest

from scatterflux import (
    DegenerateDistributionError,
    EnergyChangeDistribution,
    InvalidParameterError,
    SupportMismatchError,
    SystemSpec,
    consumption_ceiling,
    dual_distribution,
    entropy_production,
    eta_direct,
    eta_gapsum,
    extraction_ceiling,
    forward_distribution,
    gap_structure,
    microreversibility_check,
    report,
    thermal_state,
    threshold_temperature,
    verify_fluctuation_relation,
)
from scatterflux.mapbuild import eigenoperators, transition_probabilities

from conftest import FAST_M

BETA = 0.1


@pytest.fixture(scope="module")
def tp(two_level):
    return transition_probabilities(eigenoperators(two_level, 2.3, "+", FAST_M))


@pytest.fixture(scope="module")
def th(two_level):
    return thermal_state(two_level, BETA)


class TestDistributions:
    def test_forward_normalized(self, tp, th):
        fwd = forward_distribution(tp, th)
        assert fwd.normalized
        assert fwd.total() == pytest.approx(1.0, abs=1e-12)

    def test_support_is_signed_gap_set(self, tp, th):
        assert forward_distribution(tp, th).support == (-1.0, 0.0, 1.0)

    def test_weight_lookup(self, tp, th):
        fwd = forward_distribution(tp, th)
        assert fwd.weight(1.0) == fwd.weights[2]
        assert fwd.weight(0.37) == 0.0

    def test_mean_matches_table(self, tp, th):
        fwd = forward_distribution(tp, th)
        p = th.populations_array()
        t = tp.table
        expected = 1.0 * t[1, 0] * p[0] - 1.0 * t[0, 1] * p[1]
        assert fwd.mean() == pytest.approx(expected, abs=1e-14)

    def test_dual_total_is_gamma(self, tp, th):
        dual = dual_distribution(tp, th)
        p = th.populations_array()
        t = tp.table
        gamma = (
            t[0, 0] * p[0] + t[1, 1] * p[1] + p[1] * t[1, 0] + p[0] * t[0, 1]
        )
        assert dual.total() == pytest.approx(gamma, abs=1e-14)


class TestFluctuationRelation:
    @pytest.mark.parametrize("beta", [0.1, 1.0])
    def test_detailed_relation(self, tp, two_level, beta):
        th_b = thermal_state(two_level, beta)
        fwd = forward_distribution(tp, th_b)
        dual = dual_distribution(tp, th_b)
        assert verify_fluctuation_relation(fwd, dual, beta) < 1e-14

    def test_support_mismatch_raises(self, tp, th, three_level):
        other = transition_probabilities(eigenoperators(three_level, 3.3, "+", 300))
        fwd3 = forward_distribution(other, thermal_state(three_level, BETA))
        dual2 = dual_distribution(tp, th)
        with pytest.raises(SupportMismatchError):
            verify_fluctuation_relation(fwd3, dual2, BETA)


class TestEta:
    def test_direct_vs_gapsum(self, tp, th, two_level):
        gaps = gap_structure(two_level, BETA)
        dual = dual_distribution(tp, th)
        assert eta_direct(dual) == pytest.approx(
            eta_gapsum(tp, gaps, th), abs=1e-13
        )

    def test_two_level_closed_form(self, tp, th, two_level):
        # single gap: eta = tanh(beta/2) (P_down - P_up) since Z_pair = Z
        t = tp.table
        expected = math.tanh(BETA / 2.0) * (t[0, 1] - t[1, 0])
        gaps = gap_structure(two_level, BETA)
        assert eta_gapsum(tp, gaps, th) == pytest.approx(expected, abs=1e-14)

    def test_positive_below_gap(self, two_level, th):
        low = transition_probabilities(eigenoperators(two_level, 0.6, "+", FAST_M))
        gaps = gap_structure(two_level, BETA)
        assert eta_gapsum(low, gaps, th) > 0.0

    def test_beta_mismatch_rejected(self, tp, th, two_level):
        gaps = gap_structure(two_level, 0.5)
        with pytest.raises(InvalidParameterError):
            eta_gapsum(tp, gaps, th)


class TestReport:
    def test_bound_and_entropy(self, tp, th, two_level):
        rep = report(tp, th, gap_structure(two_level, BETA))
        assert rep.bound_slack >= -1e-12
        assert rep.sigma >= -1e-12

    def test_two_entropy_routes_agree(self, tp, th, two_level):
        rep = report(tp, th, gap_structure(two_level, BETA))
        assert rep.sigma == pytest.approx(rep.sigma_from_gamma, abs=1e-12)

    def test_delta_f_from_gamma(self, tp, th, two_level):
        rep = report(tp, th, gap_structure(two_level, BETA))
        assert rep.delta_f == pytest.approx(-math.log(rep.gamma) / BETA, abs=1e-14)

    def test_beta_zero(self, tp, two_level):
        th0 = thermal_state(two_level, 0.0)
        rep = report(tp, th0, gap_structure(two_level, 0.0))
        assert rep.delta_f == 0.0
        assert rep.sigma >= -1e-12

    def test_energy_extraction_below_gap(self, two_level):
        # with the excited channel closed only de-excitation moves energy
        th_b = thermal_state(two_level, BETA)
        low = transition_probabilities(eigenoperators(two_level, 0.6, "+", FAST_M))
        rep = report(low, th_b, gap_structure(two_level, BETA))
        if low.table[0, 1] > 0:
            assert rep.avg_w <= 0.0
            assert rep.eta >= 0.0


class TestEntropyProduction:
    def test_relative_entropy_nonnegative(self, tp, th):
        fwd = forward_distribution(tp, th)
        dual = dual_distribution(tp, th)
        assert entropy_production(fwd, dual) >= -1e-14

    def test_degenerate_dual_rejected(self):
        fwd = EnergyChangeDistribution((0.0, 1.0), (0.5, 0.5), True)
        dual = EnergyChangeDistribution((-1.0, 0.0), (0.0, 1.0), True)
        with pytest.raises(DegenerateDistributionError):
            entropy_production(fwd, dual)


class TestMicroreversibility:
    @pytest.mark.parametrize("e_p", [2.0, 5.0])
    def test_residual(self, two_level, e_p):
        residual, skipped = microreversibility_check(two_level, e_p, 1.0, FAST_M)
        assert residual < 1e-10
        assert skipped == ()

    def test_skips_subthreshold_shift(self, two_level):
        # E_p - W would be below threshold for the up-jump at small E_p
        residual, skipped = microreversibility_check(two_level, 0.8, 1.0, FAST_M)
        assert residual < 1e-10
        assert 1.0 in skipped


class TestCeilings:
    def test_threshold_temperature(self):
        assert threshold_temperature(1.0) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_ceilings_cross_at_third(self):
        b0 = threshold_temperature(1.0)
        assert extraction_ceiling(1.0, b0) == pytest.approx(1.0 / 3.0, abs=1e-14)
        assert consumption_ceiling(1.0, b0) == pytest.approx(1.0 / 3.0, abs=1e-14)

    def test_reference_values(self):
        assert extraction_ceiling(1.0, 0.1) == pytest.approx(0.47502, abs=1e-5)
        assert consumption_ceiling(1.0, 0.1) == pytest.approx(0.049958, abs=1e-5)

    def test_rejects_bad_gap(self):
        with pytest.raises(InvalidParameterError):
            threshold_temperature(0.0)
