"""Two-point-measurement energy statistics for arbitrary trace-preserving
Kraus maps: forward and dual distributions, the modified Jarzynski
equality, and seeded random map generation.

Doubles as an independent oracle for the scattering-derived maps, which
are imported as a cyclic process (equal initial and final Hamiltonians).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UnsupportedDegeneracyError
from .fluct import EnergyChangeDistribution
from .mapbuild import EigenoperatorSet

_BUCKET_TOL = 1e-9


def _eigensystem(h, label):
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - h.conj().T)) > 1e-10:
        raise InvalidParameterError(f"{label} must be Hermitian")
    vals, vecs = np.linalg.eigh(h)
    if np.min(np.diff(vals)) < 1e-9:
        raise UnsupportedDegeneracyError(f"{label} has a (near-)degenerate spectrum")
    return vals, vecs


@dataclass(frozen=True, eq=False)
class KrausMap:
    """Trace-preserving map sum_l K_l . K_l^dag with energy bookkeeping
    Hamiltonians before and after the evolution."""

    operators: tuple
    h_initial: np.ndarray
    h_final: np.ndarray

    def __post_init__(self):
        dim = np.asarray(self.operators[0]).shape[0]
        acc = np.zeros((dim, dim), dtype=complex)
        for k in self.operators:
            k = np.asarray(k)
            if k.shape != (dim, dim):
                raise InvalidParameterError("Kraus operators must share one square shape")
            acc += k.conj().T @ k
        if np.max(np.abs(acc - np.eye(dim))) > 1e-10:
            raise InvalidParameterError("Kraus set is not trace preserving")
        _eigensystem(self.h_initial, "initial Hamiltonian")
        _eigensystem(self.h_final, "final Hamiltonian")

    @property
    def dim(self) -> int:
        return np.asarray(self.operators[0]).shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(np.asarray(rho, dtype=complex))
        for k in self.operators:
            out += k @ rho @ k.conj().T
        return out

    def on_identity(self) -> np.ndarray:
        return self.apply(np.eye(self.dim, dtype=complex))

    @classmethod
    def from_eigenoperators(cls, eops: EigenoperatorSet) -> "KrausMap":
        """Scattering collision as a cyclic process: both Hamiltonians are
        the scatterer Hamiltonian, so the free-energy difference vanishes."""
        h = np.diag(eops.spec.levels_array()).astype(complex)
        return cls(operators=tuple(eops.kraus_list()), h_initial=h, h_final=h)


def _thermal_weights(vals, beta):
    w = np.exp(-beta * (vals - vals[0]))
    z_shifted = w.sum()
    return w / z_shifted, z_shifted * math.exp(-beta * vals[0])


def _jump_weights(kmap: KrausMap):
    """(energy jumps, forward weight matrix T_{mn}, bases) shared by the
    forward and dual distributions."""
    vals_i, vecs_i = _eigensystem(kmap.h_initial, "initial Hamiltonian")
    vals_f, vecs_f = _eigensystem(kmap.h_final, "final Hamiltonian")
    t = np.zeros((len(vals_f), len(vals_i)))
    for k in kmap.operators:
        t += np.abs(vecs_f.conj().T @ k @ vecs_i) ** 2
    return vals_i, vals_f, t


def _bucketize(values):
    """Canonical support from near-equal jump values.

    Clusters exact values within _BUCKET_TOL; the representative is the
    exact first member, not a rounded value, so generic non-degenerate
    spectra keep their jumps to machine precision.
    """
    merged = []
    for v in sorted(values):
        if merged and abs(v - merged[-1]) <= _BUCKET_TOL:
            continue
        merged.append(v)
    return merged


def _distributions(kmap: KrausMap, beta: float):
    vals_i, vals_f, t = _jump_weights(kmap)
    p_i, _ = _thermal_weights(vals_i, beta)
    p_f, _ = _thermal_weights(vals_f, beta)
    jumps = [
        vals_f[m] - vals_i[n] for m in range(len(vals_f)) for n in range(len(vals_i))
    ]
    support = _bucketize(jumps)

    def nearest(v):
        return min(support, key=lambda s: abs(s - v))

    fwd = {w: 0.0 for w in support}
    dual = {-w: 0.0 for w in support}
    for m in range(len(vals_f)):
        for n in range(len(vals_i)):
            w = nearest(vals_f[m] - vals_i[n])
            fwd[w] += t[m, n] * p_i[n]
            dual[-w] += p_f[m] * t[m, n]
    fsupport = tuple(support)
    dsupport = tuple(sorted(dual))
    f = EnergyChangeDistribution(
        support=fsupport,
        weights=tuple(fwd[w] for w in fsupport),
        normalized=True,
    )
    d_total = sum(dual.values())
    d = EnergyChangeDistribution(
        support=dsupport,
        weights=tuple(dual[w] for w in dsupport),
        normalized=abs(d_total - 1.0) < 1e-10,
    )
    return f, d


def tpm_distribution(kmap: KrausMap, beta: float) -> EnergyChangeDistribution:
    """Two-point-measurement distribution of energy changes for a system
    starting thermal with respect to the initial Hamiltonian."""
    fwd, _ = _distributions(kmap, beta)
    return fwd


def dual_tpm_distribution(kmap: KrausMap, beta: float) -> EnergyChangeDistribution:
    """Reverse-process distribution (evaluated at -W); total mass gamma."""
    _, dual = _distributions(kmap, beta)
    return dual


def gamma_dual_mass(kmap: KrausMap, beta: float) -> float:
    """gamma = Tr[Lambda(I) rho'], the dual distribution's total mass."""
    vals_f, vecs_f = _eigensystem(kmap.h_final, "final Hamiltonian")
    p_f, _ = _thermal_weights(vals_f, beta)
    rho_f = vecs_f @ np.diag(p_f).astype(complex) @ vecs_f.conj().T
    return float(np.real(np.trace(kmap.on_identity() @ rho_f)))


def free_energy_difference(kmap: KrausMap, beta: float) -> float:
    """Delta F = -log(Z_final/Z_initial)/beta between the two thermal states."""
    vals_i, _ = _eigensystem(kmap.h_initial, "initial Hamiltonian")
    vals_f, _ = _eigensystem(kmap.h_final, "final Hamiltonian")
    _, z_i = _thermal_weights(vals_i, beta)
    _, z_f = _thermal_weights(vals_f, beta)
    return -math.log(z_f / z_i) / beta


def fluctuation_residual(kmap: KrausMap, beta: float) -> float:
    """max over W of |exp(-beta W) P(W) - exp(-beta dF) dual(-W)|."""
    fwd, dual = _distributions(kmap, beta)
    df = free_energy_difference(kmap, beta)
    scale = math.exp(-beta * df)
    return max(
        abs(math.exp(-beta * w) * p - scale * dual.weight(-w))
        for w, p in zip(fwd.support, fwd.weights)
    )


def modified_jarzynski(kmap: KrausMap, beta: float) -> tuple[float, float]:
    """(lhs, rhs) of the modified Jarzynski equality:
    lhs = <exp(-beta W)>, rhs = exp(-beta (dF - log(gamma)/beta))."""
    fwd, _ = _distributions(kmap, beta)
    lhs = sum(math.exp(-beta * w) * p for w, p in zip(fwd.support, fwd.weights))
    gamma = gamma_dual_mass(kmap, beta)
    df = free_energy_difference(kmap, beta)
    rhs = math.exp(-beta * (df - math.log(gamma) / beta))
    return lhs, rhs


def _haar_unitary(dim, rng):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def _random_nondegenerate_hamiltonian(dim, rng):
    # Evenly spread eigenvalues with jitter keep the spectrum safely apart.
    vals = np.sort(np.arange(dim) + 0.3 * rng.uniform(-1, 1, size=dim))
    u = _haar_unitary(dim, rng)
    return u @ np.diag(vals).astype(complex) @ u.conj().T


def random_map(
    dim: int, rank: int, seed: int, unital: bool = False
) -> KrausMap:
    """Seeded random trace-preserving map with random non-degenerate
    Hamiltonians; ``unital`` gives a mixture of Haar-random unitaries."""
    if dim < 2 or rank < 1:
        raise InvalidParameterError("need dim >= 2 and rank >= 1")
    rng = np.random.default_rng(seed)
    if unital:
        probs = rng.dirichlet(np.ones(rank))
        ops = tuple(math.sqrt(p) * _haar_unitary(dim, rng) for p in probs)
    else:
        z = rng.normal(size=(dim * rank, dim)) + 1j * rng.normal(size=(dim * rank, dim))
        q, _ = np.linalg.qr(z)  # isometry: q^dag q = I
        ops = tuple(q[l * dim : (l + 1) * dim, :] for l in range(rank))
    h_i = _random_nondegenerate_hamiltonian(dim, rng)
    h_f = _random_nondegenerate_hamiltonian(dim, rng)
    return KrausMap(operators=ops, h_initial=h_i, h_final=h_f)
