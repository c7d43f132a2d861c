"""Averages over the particle's kinetic-energy distribution: the
stochastic level-transition matrix, the unconditioned energy-change
distribution, detailed balance and the heat-exchange fluctuation theorem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import GAP_TOL, SystemSpec, ThermalState, gap_structure
from .errors import InvalidParameterError, QuadratureConvergenceError, SpecMismatchError
from .fluct import EnergyChangeDistribution
from .solver import DEFAULT_SLICES, THRESHOLD_TOL, solve_smatrix_batch

DEFAULT_Q = 400
DEFAULT_E_MAX_FACTOR = 40.0


def _panel_nodes(lo: float, hi: float, q: int):
    """Gauss-Legendre nodes on [lo, hi] under a sin^2 endpoint mapping.

    Scattering probabilities have square-root cusps where channels open,
    i.e. at panel edges; the mapping x = lo + (hi-lo) sin^2(theta) makes
    the integrand smooth in theta at both ends, restoring spectral
    convergence.
    """
    t, w = leggauss(q)
    theta = (t + 1.0) * (math.pi / 4.0)
    wt = w * (math.pi / 4.0)
    x = lo + (hi - lo) * np.sin(theta) ** 2
    jac = (hi - lo) * np.sin(2.0 * theta)
    return x, wt * jac


@dataclass(frozen=True)
class ParticleEnergyDistribution:
    """Kinetic-energy distribution of the incoming particle.

    ``nodes``/``masses`` form a quadrature of the density: for smooth f,
    integral of f(E) rho(E) dE ~ sum_i masses_i f(nodes_i).  Direction
    weights default to the symmetric 1/2, 1/2 split, which makes the
    averaged setup microscopically reversible for any potential.
    """

    kind: str
    nodes: tuple[float, ...]
    masses: tuple[float, ...]
    beta_tilde: float | None = None
    e_max: float | None = None
    direction_weights: tuple[float, float] = (0.5, 0.5)
    q: int = field(default=0, compare=False)
    breakpoints: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if any(m < 0 for m in self.masses):
            raise InvalidParameterError("quadrature masses must be nonnegative")
        if abs(sum(self.direction_weights) - 1.0) > 1e-12 or any(
            w < 0 for w in self.direction_weights
        ):
            raise InvalidParameterError("direction weights must be a distribution")
        if self.kind in ("delta", "thermal", "tabulated"):
            if abs(sum(self.masses) - 1.0) > 1e-9:
                raise InvalidParameterError(
                    "quadrature does not normalize the density within 1e-9"
                )
        else:
            raise InvalidParameterError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def delta(cls, e_p: float, direction_weights=(0.5, 0.5)):
        """All probability at a single kinetic energy."""
        if e_p <= 0:
            raise InvalidParameterError("kinetic energy must be > 0")
        return cls(
            kind="delta",
            nodes=(float(e_p),),
            masses=(1.0,),
            direction_weights=tuple(direction_weights),
        )

    @classmethod
    def thermal(
        cls,
        beta_tilde: float,
        q: int = DEFAULT_Q,
        e_max: float | None = None,
        breakpoints=(),
        eps: float = THRESHOLD_TOL,
        direction_weights=(0.5, 0.5),
    ):
        """Exponential density beta_tilde * exp(-beta_tilde E) on [0, inf),
        truncated at e_max (default 40/beta_tilde) and discretized on
        panels split at the given breakpoints (typically the gap set)."""
        if beta_tilde <= 0:
            raise InvalidParameterError("beta_tilde must be > 0")
        if e_max is None:
            e_max = DEFAULT_E_MAX_FACTOR / beta_tilde
        # The sin^2 mapping keeps nodes strictly inside each panel, so the
        # first panel can start at the E_p = 0 threshold itself.
        edges = [0.0] + sorted(b for b in breakpoints if eps < b < e_max) + [e_max]
        n_panels = len(edges) - 1
        per_panel = max(16, q // n_panels)
        nodes, masses = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            x, w = _panel_nodes(lo, hi, per_panel)
            nodes.extend(x)
            masses.extend(w * beta_tilde * np.exp(-beta_tilde * x))
        # Divide out the e_max truncation so the masses sum to one exactly.
        masses = list(np.asarray(masses) / sum(masses))
        return cls(
            kind="thermal",
            nodes=tuple(nodes),
            masses=tuple(masses),
            beta_tilde=float(beta_tilde),
            e_max=float(e_max),
            direction_weights=tuple(direction_weights),
            q=q,
            breakpoints=tuple(breakpoints),
        )

    @classmethod
    def tabulated(cls, nodes, masses, direction_weights=(0.5, 0.5)):
        """Pass-through point masses; must sum to one."""
        return cls(
            kind="tabulated",
            nodes=tuple(float(x) for x in nodes),
            masses=tuple(float(m) for m in masses),
            direction_weights=tuple(direction_weights),
        )

    def refined(self) -> "ParticleEnergyDistribution":
        """Same distribution with doubled quadrature order (thermal only)."""
        if self.kind != "thermal":
            raise InvalidParameterError("only thermal quadratures can be refined")
        return type(self).thermal(
            self.beta_tilde,
            q=2 * self.q,
            e_max=self.e_max,
            breakpoints=self.breakpoints,
            direction_weights=self.direction_weights,
        )


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Level-transition matrix averaged over the particle distribution;
    column-stochastic within quadrature tolerance."""

    spec: SystemSpec
    dist: ParticleEnergyDistribution
    matrix: np.ndarray

    def column_residual(self) -> float:
        return float(np.max(np.abs(self.matrix.sum(axis=0) - 1.0)))

    def renormalized(self) -> "StochasticMatrix":
        """Columns rescaled to sum to one exactly; isolates relation
        errors from quadrature error in downstream identity checks."""
        m = self.matrix / self.matrix.sum(axis=0, keepdims=True)
        return StochasticMatrix(spec=self.spec, dist=self.dist, matrix=m)


def _nudged_nodes(spec: SystemSpec, dist, tol):
    """Shift quadrature nodes off channel-opening energies."""
    gaps = gap_structure(spec, 0.0).gaps
    thresholds = (0.0,) + gaps
    nodes = []
    for x in dist.nodes:
        while any(abs(x - t) < tol for t in thresholds):
            x += tol
        nodes.append(x)
    return nodes


def stochastic_matrix(
    spec: SystemSpec,
    dist: ParticleEnergyDistribution,
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
    check_convergence: bool = False,
    convergence_tol: float = 1e-6,
) -> StochasticMatrix:
    """Quadrature of the transition probabilities over the particle
    distribution, S_{j'j} = int dE_p sum_a w_a P^a_{j'j}(E_p + e_j) rho(E_p)."""
    nodes = _nudged_nodes(spec, dist, threshold_tol)
    lv = spec.levels_array()
    n = spec.n_levels
    totals = [x + e for x in nodes for e in lv]
    smats = solve_smatrix_batch(spec, totals, m_slices, threshold_tol)

    w_plus, w_minus = dist.direction_weights
    out = np.zeros((n, n))
    for i, mass in enumerate(dist.masses):
        for j in range(n):
            sm = smats[i * n + j]
            col = np.zeros(n)
            for ao in ("+", "-"):
                for r, jp in enumerate(sm.open_levels):
                    c = sm.open_levels.index(j)
                    col[jp] += w_plus * abs(sm.block(ao, "+")[r, c]) ** 2
                    col[jp] += w_minus * abs(sm.block(ao, "-")[r, c]) ** 2
            out[:, j] += mass * col
    result = StochasticMatrix(spec=spec, dist=dist, matrix=out)

    if check_convergence:
        finer = stochastic_matrix(
            spec, dist.refined(), m_slices, threshold_tol, check_convergence=False
        )
        change = float(np.max(np.abs(finer.matrix - out)))
        if change > convergence_tol:
            raise QuadratureConvergenceError(
                f"doubling the quadrature order moved entries by {change:.3e}"
            )
    return result


def _unconditioned(matrix, th: ThermalState, dual: bool) -> EnergyChangeDistribution:
    gs = gap_structure(th.spec, 0.0)
    support = sorted([-g for g in gs.gaps] + [0.0] + list(gs.gaps))
    p = th.populations_array()
    masses = {w: 0.0 for w in support}
    masses[0.0] = float(np.sum(np.diag(matrix) * p))
    for g, bucket in zip(gs.gaps, gs.pairs):
        for jp, j in bucket:
            if dual:
                masses[-g] += p[jp] * matrix[jp, j]
                masses[g] += p[j] * matrix[j, jp]
            else:
                masses[g] += matrix[jp, j] * p[j]
                masses[-g] += matrix[j, jp] * p[jp]
    weights = tuple(masses[w] for w in support)
    total = sum(weights)
    return EnergyChangeDistribution(
        support=tuple(support), weights=weights, normalized=abs(total - 1.0) < 1e-10
    )


def unconditioned_distribution(
    s_mat: StochasticMatrix, th: ThermalState
) -> EnergyChangeDistribution:
    """P(W) with the stochastic matrix in place of the fixed-energy table."""
    if s_mat.spec != th.spec:
        raise SpecMismatchError("stochastic matrix and thermal state use different specs")
    return _unconditioned(s_mat.matrix, th, dual=False)


def unconditioned_dual_distribution(
    s_mat: StochasticMatrix, th: ThermalState
) -> EnergyChangeDistribution:
    """Dual of the unconditioned distribution; total mass is the
    unconditioned gamma."""
    if s_mat.spec != th.spec:
        raise SpecMismatchError("stochastic matrix and thermal state use different specs")
    return _unconditioned(s_mat.matrix, th, dual=True)


def detailed_balance_check(s_mat: StochasticMatrix) -> float | None:
    """max over pairs of |S_{j'j} - exp(-beta_tilde (e_{j'} - e_j)) S_{jj'}|.

    Returns None when the setup is not microscopically reversible (unequal
    direction weights) or the distribution is not thermal, since detailed
    balance is then not expected to hold.
    """
    dist = s_mat.dist
    if dist.kind != "thermal":
        return None
    if abs(dist.direction_weights[0] - dist.direction_weights[1]) > 1e-12:
        return None
    lv = s_mat.spec.levels_array()
    m = s_mat.matrix
    bt = dist.beta_tilde
    residual = 0.0
    n = s_mat.spec.n_levels
    for jp in range(n):
        for j in range(n):
            residual = max(
                residual, abs(m[jp, j] - math.exp(-bt * (lv[jp] - lv[j])) * m[j, jp])
            )
    return residual


def heat_exchange_ft_check(s_mat: StochasticMatrix, th: ThermalState) -> float | None:
    """max over W of |exp(-(beta - beta_tilde) W) P(W) - P(-W)| for the
    unconditioned distribution; None when detailed balance does not apply."""
    dist = s_mat.dist
    if dist.kind != "thermal":
        return None
    if abs(dist.direction_weights[0] - dist.direction_weights[1]) > 1e-12:
        return None
    fwd = unconditioned_distribution(s_mat, th)
    db = th.beta - dist.beta_tilde
    return max(
        abs(math.exp(-db * w) * p - fwd.weight(-w))
        for w, p in zip(fwd.support, fwd.weights)
    )
