"""Conditional quantum map induced by one collision at fixed kinetic energy.

The Kraus operators of the map shift the system energy by exactly one
level difference each; entry (j', j) of the operator for shift d and
outgoing direction a' is the scattering amplitude s^{a'a}_{j'j} evaluated
at total energy E_p + e_j, or zero when the outgoing channel is closed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SystemSpec, gap_structure
from .errors import InvalidParameterError, InvalidStateError
from .solver import DEFAULT_SLICES, THRESHOLD_TOL, solve_smatrix_batch

_DELTA_ROUND = 9


def _signed_deltas(spec: SystemSpec):
    """Map signed energy shift -> list of (row, col) level pairs."""
    gs = gap_structure(spec, 0.0)
    table: dict[float, list[tuple[int, int]]] = {
        0.0: [(j, j) for j in range(spec.n_levels)]
    }
    for g, bucket in zip(gs.gaps, gs.pairs):
        table[round(g, _DELTA_ROUND)] = list(bucket)
        table[round(-g, _DELTA_ROUND)] = [(j, jp) for jp, j in bucket]
    return table


@dataclass(frozen=True, eq=False)
class EigenoperatorSet:
    """Kraus operators of the collision map at fixed (E_p, direction).

    ``operators[(d, a')]`` is the N x N matrix shifting the system energy
    by d with the particle leaving in direction a'.  Each operator
    satisfies [H_S, K] = d K by construction.
    """

    spec: SystemSpec
    e_p: float
    alpha: str
    operators: dict = field(repr=False)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(sorted({d for d, _ in self.operators}))

    def kraus_list(self) -> list[np.ndarray]:
        return [self.operators[k] for k in sorted(self.operators)]

    def operator(self, delta: float, out_direction: str) -> np.ndarray:
        return self.operators[(round(delta, _DELTA_ROUND), out_direction)]

    def completeness_residual(self) -> float:
        """max-norm deviation of sum K^dag K from the identity."""
        acc = sum(k.conj().T @ k for k in self.kraus_list())
        return float(np.max(np.abs(acc - np.eye(self.spec.n_levels))))


def eigenoperators(
    spec: SystemSpec,
    e_p: float,
    alpha: str = "+",
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
) -> EigenoperatorSet:
    """Build the Kraus operators of the conditional map.

    One coupled-channel solve per distinct total energy E_p + e_j; the
    solver cache deduplicates coinciding energies of commensurate spectra.
    """
    if not math.isfinite(e_p) or e_p <= 0:
        raise InvalidParameterError(f"kinetic energy must be > 0, got {e_p}")
    if alpha not in ("+", "-"):
        raise InvalidParameterError(f"direction must be '+' or '-', got {alpha!r}")
    lv = spec.levels_array()
    totals = [e_p + e for e in lv]
    smats = solve_smatrix_batch(spec, totals, m_slices, threshold_tol)

    n = spec.n_levels
    ops = {
        (d, ao): np.zeros((n, n), dtype=complex)
        for d in _signed_deltas(spec)
        for ao in ("+", "-")
    }
    for d, pairs in _signed_deltas(spec).items():
        for jp, j in pairs:
            sm = smats[j]
            if jp not in sm.open_levels:
                continue  # outgoing channel closed: entry stays zero
            for ao in ("+", "-"):
                ops[(d, ao)][jp, j] = sm.entry(ao, jp, alpha, j)
    return EigenoperatorSet(spec=spec, e_p=float(e_p), alpha=alpha, operators=ops)


@dataclass(frozen=True, eq=False)
class TransitionProbabilities:
    """Level-to-level transition table P_{j'j} at fixed kinetic energy.

    Column j is evaluated at total energy e_p + e_j; entries sum over the
    outgoing direction(s).  ``alpha`` is "+", "-" or "avg" (the half-sum
    over both incoming directions).
    """

    spec: SystemSpec
    e_p: float
    alpha: str
    table: np.ndarray

    def column_residual(self) -> float:
        return float(np.max(np.abs(self.table.sum(axis=0) - 1.0)))

    def row_sums(self) -> np.ndarray:
        return self.table.sum(axis=1)


def transition_probabilities(eops: EigenoperatorSet) -> TransitionProbabilities:
    """P^a_{j'j}(E_p + e_j) = sum_{a'} |s^{a'a}_{j'j}|^2 from the Kraus set."""
    n = eops.spec.n_levels
    table = np.zeros((n, n))
    for op in eops.operators.values():
        table += np.abs(op) ** 2
    return TransitionProbabilities(
        spec=eops.spec, e_p=eops.e_p, alpha=eops.alpha, table=table
    )


def transition_probabilities_averaged(
    spec: SystemSpec,
    e_p: float,
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
) -> TransitionProbabilities:
    """Direction-averaged table (1/2) sum_{a a'} |s^{a'a}_{j'j}|^2."""
    tables = [
        transition_probabilities(
            eigenoperators(spec, e_p, alpha, m_slices, threshold_tol)
        ).table
        for alpha in ("+", "-")
    ]
    return TransitionProbabilities(
        spec=spec, e_p=float(e_p), alpha="avg", table=0.5 * (tables[0] + tables[1])
    )


def _check_density_matrix(rho: np.ndarray, n: int):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (n, n):
        raise InvalidStateError(f"density matrix must be {n}x{n}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise InvalidStateError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-8:
        raise InvalidStateError("density matrix must have unit trace")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
        raise InvalidStateError("density matrix must be positive semidefinite")
    return rho


def apply_map(eops: EigenoperatorSet, rho) -> np.ndarray:
    """State after the collision, sum_K K rho K^dag.

    Populations evolve by the stochastic column action of the transition
    table; a coherence between a level pair feeds only coherences of
    pairs with the same energy difference.
    """
    rho = _check_density_matrix(rho, eops.spec.n_levels)
    out = np.zeros_like(rho)
    for k in eops.kraus_list():
        out += k @ rho @ k.conj().T
    return out


def map_on_identity(eops: EigenoperatorSet) -> np.ndarray:
    """sum_K K K^dag; diagonal in the level basis, and equal to the
    identity only when the map is unital."""
    n = eops.spec.n_levels
    out = np.zeros((n, n), dtype=complex)
    for k in eops.kraus_list():
        out += k @ k.conj().T
    return out


def effective_hamiltonian(eops: EigenoperatorSet, beta: float) -> np.ndarray:
    """Diagonal of H_S - (1/beta) log(map_on_identity), as level energies."""
    if beta <= 0:
        raise InvalidParameterError("beta must be > 0 for the effective Hamiltonian")
    diag = np.real(np.diag(map_on_identity(eops)))
    if np.any(diag <= 0):
        raise InvalidParameterError("map on identity has a non-positive diagonal")
    return eops.spec.levels_array() - np.log(diag) / beta
