"""Energy-change statistics at fixed kinetic energy: forward and dual
distributions, the detailed fluctuation relation, the non-unitality
measure eta, free-energy bound, entropy production and the
microscopic-reversibility identity.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .core import GAP_TOL, GapStructure, SystemSpec, ThermalState, gap_structure, thermal_state
from .errors import (
    DegenerateDistributionError,
    InvalidParameterError,
    NoOpenChannelError,
    SpecMismatchError,
    SupportMismatchError,
    ThresholdProximityError,
)
from .mapbuild import TransitionProbabilities, transition_probabilities_averaged
from .solver import DEFAULT_SLICES, THRESHOLD_TOL, solve_smatrix


@dataclass(frozen=True)
class EnergyChangeDistribution:
    """Point masses on the set of system energy jumps W.

    The support is the gap set, its negatives and zero.  Forward
    distributions are normalized; dual distributions carry total mass
    gamma and are generally not.
    """

    support: tuple[float, ...]
    weights: tuple[float, ...]
    normalized: bool

    def weight(self, w: float, tol: float = GAP_TOL) -> float:
        i = bisect_left(self.support, w - tol)
        if i < len(self.support) and abs(self.support[i] - w) <= tol:
            return self.weights[i]
        return 0.0

    def total(self) -> float:
        return float(sum(self.weights))

    def mean(self) -> float:
        return float(sum(w * p for w, p in zip(self.support, self.weights)))


def _check_consistent(tp: TransitionProbabilities, th: ThermalState):
    if tp.spec != th.spec:
        raise SpecMismatchError("transition table and thermal state use different specs")


def _support_for(spec: SystemSpec):
    gs = gap_structure(spec, 0.0)
    support = sorted([-g for g in gs.gaps] + [0.0] + list(gs.gaps))
    return gs, support


def forward_distribution(
    tp: TransitionProbabilities, th: ThermalState
) -> EnergyChangeDistribution:
    """Probability of a system energy change W in one collision:
    weight(W) = sum over pairs with e_{j'} - e_j = W of P_{j'j} p_j."""
    _check_consistent(tp, th)
    gs, support = _support_for(tp.spec)
    p = th.populations_array()
    t = tp.table
    masses = {w: 0.0 for w in support}
    masses[0.0] = float(np.sum(np.diag(t) * p))
    for g, bucket in zip(gs.gaps, gs.pairs):
        up = sum(t[jp, j] * p[j] for jp, j in bucket)
        down = sum(t[j, jp] * p[jp] for jp, j in bucket)
        masses[g] += up
        masses[-g] += down
    weights = tuple(masses[w] for w in support)
    total = sum(weights)
    return EnergyChangeDistribution(
        support=tuple(support), weights=weights, normalized=abs(total - 1.0) < 1e-10
    )


def dual_distribution(
    tp: TransitionProbabilities, th: ThermalState
) -> EnergyChangeDistribution:
    """Dual distribution evaluated at -W: for each pair the mass
    p_{j'} P_{j'j} sits at e_j - e_{j'}.  Total mass is gamma."""
    _check_consistent(tp, th)
    gs, support = _support_for(tp.spec)
    p = th.populations_array()
    t = tp.table
    masses = {w: 0.0 for w in support}
    masses[0.0] = float(np.sum(np.diag(t) * p))
    for g, bucket in zip(gs.gaps, gs.pairs):
        # pair (j', j), j' upper: forward jump +g carries dual mass at -g
        masses[-g] += sum(p[jp] * t[jp, j] for jp, j in bucket)
        masses[g] += sum(p[j] * t[j, jp] for jp, j in bucket)
    weights = tuple(masses[w] for w in support)
    total = sum(weights)
    return EnergyChangeDistribution(
        support=tuple(support), weights=weights, normalized=abs(total - 1.0) < 1e-10
    )


def verify_fluctuation_relation(
    fwd: EnergyChangeDistribution,
    dual: EnergyChangeDistribution,
    beta: float,
    tol: float = GAP_TOL,
) -> float:
    """max over W of |exp(-beta W) P(W) - dual(-W)|."""
    if len(fwd.support) != len(dual.support) or any(
        abs(a - b) > tol for a, b in zip(fwd.support, dual.support)
    ):
        raise SupportMismatchError("distributions live on different supports")
    return max(
        abs(math.exp(-beta * w) * p - dual.weight(-w, tol))
        for w, p in zip(fwd.support, fwd.weights)
    )


def eta_direct(dual: EnergyChangeDistribution) -> float:
    """Non-unitality measure: total dual mass minus one."""
    return dual.total() - 1.0


def eta_gapsum(
    tp: TransitionProbabilities, gaps: GapStructure, th: ThermalState
) -> float:
    """Exact gap-sum form of eta:
    sum_{gaps} tanh(beta g / 2) sum_pairs (Z_pair/Z) (P_down - P_up)."""
    _check_consistent(tp, th)
    if gaps.spec != tp.spec:
        raise SpecMismatchError("gap structure built from a different spec")
    if abs(gaps.beta - th.beta) > 1e-12:
        raise InvalidParameterError("gap structure and thermal state disagree on beta")
    t = tp.table
    z = th.partition
    out = 0.0
    for g, bucket in zip(gaps.gaps, gaps.pairs):
        th_factor = math.tanh(th.beta * g / 2.0)
        acc = 0.0
        for jp, j in bucket:
            zpair = gaps.pair_partition[(jp, j)]
            acc += (zpair / z) * (t[j, jp] - t[jp, j])
        out += th_factor * acc
    return out


@dataclass(frozen=True)
class FluctuationReport:
    """Scalar fluctuation statistics at one (E_p, direction)."""

    e_p: float
    alpha: str
    beta: float
    avg_w: float
    gamma: float
    eta: float
    delta_f: float
    sigma: float
    sigma_from_gamma: float
    bound_slack: float


def entropy_production(
    fwd: EnergyChangeDistribution, dual: EnergyChangeDistribution
) -> float:
    """Relative entropy between the forward distribution and the
    normalized dual distribution."""
    gamma = dual.total()
    if gamma <= 0:
        raise DegenerateDistributionError("dual distribution has no mass")
    acc = 0.0
    for w, p in zip(fwd.support, fwd.weights):
        if p <= 0:
            continue
        q = dual.weight(-w) / gamma
        if q <= 0:
            raise DegenerateDistributionError(
                f"dual distribution vanishes where the forward does not (W={w})"
            )
        acc += p * math.log(p / q)
    return acc


def report(
    tp: TransitionProbabilities, th: ThermalState, gaps: GapStructure
) -> FluctuationReport:
    """All scalar statistics in one pass; beta = 0 reports delta_f = 0."""
    fwd = forward_distribution(tp, th)
    dual = dual_distribution(tp, th)
    if fwd.total() <= 0:
        raise DegenerateDistributionError("forward distribution has no mass")
    gamma = dual.total()
    eta = gamma - 1.0
    avg_w = fwd.mean()
    beta = th.beta
    delta_f = 0.0 if beta == 0 else -math.log(gamma) / beta
    sigma = entropy_production(fwd, dual)
    sigma_e2 = beta * avg_w + math.log(gamma)
    return FluctuationReport(
        e_p=tp.e_p,
        alpha=tp.alpha,
        beta=beta,
        avg_w=avg_w,
        gamma=gamma,
        eta=eta,
        delta_f=delta_f,
        sigma=sigma,
        sigma_from_gamma=sigma_e2,
        bound_slack=avg_w - delta_f,
    )


def microreversibility_check(
    spec: SystemSpec,
    e_p: float,
    beta: float,
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
) -> tuple[float, tuple[float, ...]]:
    """Check exp(-beta W) P(E_p, W) = P(E_p - W, -W) on the gap support.

    Uses direction-averaged transition probabilities, which make the
    setup microscopically reversible regardless of potential symmetry.
    Support points with E_p - W at or below threshold are skipped and
    reported in the second return value.
    """
    th = thermal_state(spec, beta)
    tp0 = transition_probabilities_averaged(spec, e_p, m_slices, threshold_tol)
    fwd0 = forward_distribution(tp0, th)
    residual = 0.0
    skipped = []
    for w, p in zip(fwd0.support, fwd0.weights):
        if w == 0.0:
            continue  # identical distributions on both sides
        shifted = e_p - w
        if shifted <= threshold_tol:
            skipped.append(w)
            continue
        try:
            rhs = _averaged_weight_at(spec, shifted, -w, th, m_slices, threshold_tol)
        except (ThresholdProximityError, NoOpenChannelError):
            skipped.append(w)
            continue
        residual = max(residual, abs(math.exp(-beta * w) * p - rhs))
    return residual, tuple(skipped)


def _averaged_weight_at(
    spec: SystemSpec,
    e_p: float,
    w: float,
    th: ThermalState,
    m_slices: int,
    threshold_tol: float,
) -> float:
    """Forward-distribution weight at one W, direction averaged.

    Solves only the total energies of the contributing entrance levels,
    so unrelated channels sitting at a threshold do not get in the way.
    """
    gs = gap_structure(spec, 0.0)
    if abs(w) <= GAP_TOL:
        pairs = [(j, j) for j in range(spec.n_levels)]
    elif w > 0:
        pairs = list(gs.pairs_for(w))
    else:
        pairs = [(j, jp) for jp, j in gs.pairs_for(-w)]
    p = th.populations_array()
    acc = 0.0
    for jp, j in pairs:
        sm = solve_smatrix(spec, e_p + spec.levels[j], m_slices, threshold_tol)
        if jp not in sm.open_levels:
            continue
        prob = 0.5 * sum(
            abs(sm.entry(ao, jp, ai, j)) ** 2 for ao in ("+", "-") for ai in ("+", "-")
        )
        acc += prob * p[j]
    return acc


def threshold_temperature(delta: float) -> float:
    """Inverse temperature where the extraction and consumption ceilings
    of a two-level system cross; both equal delta/3 there."""
    if delta <= 0:
        raise InvalidParameterError("delta must be > 0")
    return math.log(2.0) / delta


def extraction_ceiling(delta: float, beta: float) -> float:
    """Largest extractable average energy, delta times the Fermi function."""
    return delta / (1.0 + math.exp(beta * delta))


def consumption_ceiling(delta: float, beta: float) -> float:
    """Largest average energy intake in the unital regime."""
    return delta * math.tanh(beta * delta / 2.0)
