"""Collision map construction: Kraus operators, transition tables,
map application."""
import numpy as np
import pytest

from scatterflux import (
    InvalidParameterError,
    InvalidStateError,
    SystemSpec,
    apply_map,
    dual_distribution,
    effective_hamiltonian,
    eigenoperators,
    map_on_identity,
    thermal_state,
    transition_probabilities,
    transition_probabilities_averaged,
)

from conftest import FAST_M


@pytest.fixture(scope="module")
def eops(two_level):
    return eigenoperators(two_level, 2.3, "+", FAST_M)


class TestEigenoperators:
    def test_completeness(self, eops):
        assert eops.completeness_residual() < 1e-12

    def test_deltas_cover_signed_gaps(self, eops):
        assert eops.deltas == (-1.0, 0.0, 1.0)

    def test_commutes_to_shift(self, eops, two_level):
        # [H_S, K_d] = d K_d holds exactly by the sparsity pattern
        h = np.diag(two_level.levels_array())
        for (d, _), k in eops.operators.items():
            np.testing.assert_array_equal(h @ k - k @ h, d * k)

    def test_operator_lookup(self, eops):
        k = eops.operator(1.0, "+")
        assert k.shape == (2, 2)
        assert k[1, 0] != 0.0
        assert k[0, 0] == k[0, 1] == k[1, 1] == 0.0

    def test_closed_channel_zero_block(self, two_level):
        # below the gap the up-shift operator vanishes identically
        low = eigenoperators(two_level, 0.4, "+", FAST_M)
        for ao in ("+", "-"):
            np.testing.assert_array_equal(low.operator(1.0, ao), 0.0)
        assert low.completeness_residual() < 1e-12

    def test_three_level_completeness(self, three_level):
        assert (
            eigenoperators(three_level, 3.7, "-", FAST_M).completeness_residual()
            < 1e-12
        )

    def test_rejects_nonpositive_energy(self, two_level):
        with pytest.raises(InvalidParameterError):
            eigenoperators(two_level, 0.0, "+", FAST_M)

    def test_rejects_bad_direction(self, two_level):
        with pytest.raises(InvalidParameterError):
            eigenoperators(two_level, 1.3, "x", FAST_M)


class TestTransitionProbabilities:
    def test_column_stochastic(self, eops):
        assert transition_probabilities(eops).column_residual() < 1e-12

    def test_closed_channel_entry_exactly_zero(self, two_level):
        low = eigenoperators(two_level, 0.7, "+", FAST_M)
        table = transition_probabilities(low).table
        assert table[1, 0] == 0.0
        assert table[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_averaged_equals_directions_for_symmetric(self, two_level):
        avg = transition_probabilities_averaged(two_level, 2.3, FAST_M)
        plus = transition_probabilities(eigenoperators(two_level, 2.3, "+", FAST_M))
        np.testing.assert_allclose(avg.table, plus.table, atol=1e-12)
        assert avg.alpha == "avg"

    def test_rows_sum_below_one_when_nonunital(self, eops):
        rows = transition_probabilities(eops).row_sums()
        assert not np.allclose(rows, 1.0, atol=1e-6)


class TestApplyMap:
    def test_preserves_trace_and_positivity(self, eops):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = z @ z.conj().T
        rho /= np.trace(rho).real
        out = apply_map(eops, rho)
        assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)
        assert np.min(np.linalg.eigvalsh(out)) > -1e-12

    def test_populations_follow_table(self, eops):
        table = transition_probabilities(eops).table
        rho = np.diag([0.3, 0.7]).astype(complex)
        out = apply_map(eops, rho)
        np.testing.assert_allclose(
            np.real(np.diag(out)), table @ [0.3, 0.7], atol=1e-12
        )

    def test_diagonal_input_stays_diagonal(self, eops):
        out = apply_map(eops, np.diag([0.5, 0.5]).astype(complex))
        assert abs(out[0, 1]) < 1e-14

    @pytest.mark.parametrize(
        "rho",
        [
            np.eye(3) / 3.0,  # wrong dimension
            np.array([[0.5, 0.5j], [0.5j, 0.5]]),  # not Hermitian
            np.diag([0.9, 0.9]),  # trace 1.8
            np.diag([1.2, -0.2]),  # negative eigenvalue
        ],
    )
    def test_rejects_invalid_states(self, eops, rho):
        with pytest.raises(InvalidStateError):
            apply_map(eops, rho.astype(complex))


class TestNonUnitality:
    def test_map_on_identity_diagonal(self, eops):
        lam = map_on_identity(eops)
        assert abs(lam[0, 1]) < 1e-14 and abs(lam[1, 0]) < 1e-14

    def test_nonunital_at_finite_energy(self, eops):
        lam = map_on_identity(eops)
        assert np.max(np.abs(lam - np.eye(2))) > 1e-4

    def test_unital_for_free_potential(self):
        spec = SystemSpec.ladder(2, 1.0, 0.0)
        lam = map_on_identity(eigenoperators(spec, 2.3, "+", 200))
        np.testing.assert_allclose(lam, np.eye(2), atol=1e-12)

    def test_effective_hamiltonian_reproduces_gamma(self, eops, two_level):
        # Z of the effective levels over Z reproduces the dual total mass
        beta = 0.7
        th = thermal_state(two_level, beta)
        eff = effective_hamiltonian(eops, beta)
        z_eff = np.sum(np.exp(-beta * eff))
        gamma = z_eff / th.partition
        tp = transition_probabilities(eops)
        assert gamma == pytest.approx(dual_distribution(tp, th).total(), abs=1e-12)

    def test_effective_hamiltonian_needs_positive_beta(self, eops):
        with pytest.raises(InvalidParameterError):
            effective_hamiltonian(eops, 0.0)
