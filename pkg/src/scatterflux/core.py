"""Domain model: scatterer specification, thermal states, gap structure and
channel kinematics.

All types are immutable after construction and all operations are pure,
so everything here is safe to share between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

#: Absolute tolerance used to bucket near-equal level differences into gaps.
GAP_TOL = 1e-9


def _safe_exp(x: float) -> float:
    """exp that saturates to inf instead of raising on overflow."""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class PotentialProfile:
    """Shape of the scattering potential envelope v(x) on [-a/2, +a/2].

    ``v0`` is the overall amplitude (energy units) and ``a`` the support
    length.  ``shape`` selects the envelope: ``"cosine"`` is
    v(x) = cos(pi x / a), ``"flat"`` is v(x) = 1 on the support.  Outside
    the support the potential vanishes.
    """

    v0: float
    a: float
    shape: str = "cosine"

    def __post_init__(self):
        if not math.isfinite(self.v0) or self.v0 < 0:
            raise InvalidParameterError(f"V0 must be finite and >= 0, got {self.v0}")
        if not math.isfinite(self.a) or self.a <= 0:
            raise InvalidParameterError(f"a must be finite and > 0, got {self.a}")
        if self.shape not in ("cosine", "flat"):
            raise InvalidParameterError(f"unknown profile shape {self.shape!r}")

    def envelope(self, x):
        """Evaluate v(x) inside the support (caller restricts to |x| <= a/2)."""
        if self.shape == "cosine":
            return np.cos(np.pi * np.asarray(x) / self.a)
        return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SystemSpec:
    """An N-level scatterer: level energies, coupling weights, potential
    profile and physical constants.

    The coupling matrix holds the dimensionless weights W; the full
    interaction inside the support is v(x) * V0 * (pi/2) * W.
    """

    levels: tuple[float, ...]
    coupling: tuple[tuple[float, ...], ...]
    profile: PotentialProfile
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if len(self.levels) < 1:
            raise InvalidParameterError("need at least one level")
        lv = np.asarray(self.levels, dtype=float)
        if not np.all(np.isfinite(lv)):
            raise InvalidParameterError("levels must be finite")
        if np.any(np.diff(lv) <= 0):
            raise InvalidParameterError("levels must be strictly increasing")
        w = np.asarray(self.coupling, dtype=float)
        if w.shape != (len(self.levels), len(self.levels)):
            raise InvalidParameterError(
                f"coupling must be {len(self.levels)}x{len(self.levels)}"
            )
        if not np.allclose(w, w.T, atol=0.0):
            raise InvalidParameterError("coupling matrix must be symmetric")
        for name, val in (("mass", self.mass), ("hbar", self.hbar)):
            if not math.isfinite(val) or val <= 0:
                raise InvalidParameterError(f"{name} must be finite and > 0")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def levels_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)

    def coupling_array(self) -> np.ndarray:
        return np.asarray(self.coupling, dtype=float)

    @classmethod
    def ladder(cls, n, delta, v0, a=1.0, mass=1.0, hbar=1.0, shape="cosine"):
        """Equispaced N-level system with gap set {delta, 2*delta, ...}.

        Levels are centered around zero; for n = 2 this is {-delta/2,
        +delta/2} with Pauli-x coupling.  For n > 2 the coupling has zeros
        on the diagonal and ones everywhere else.
        """
        if n < 1:
            raise InvalidParameterError("n must be >= 1")
        if delta <= 0:
            raise InvalidParameterError("delta must be > 0")
        offset = (n - 1) * delta / 2.0
        levels = tuple(j * delta - offset for j in range(n))
        coupling = tuple(
            tuple(0.0 if i == j else 1.0 for j in range(n)) for i in range(n)
        )
        return cls(
            levels=levels,
            coupling=coupling,
            profile=PotentialProfile(v0=v0, a=a, shape=shape),
            mass=mass,
            hbar=hbar,
        )

    @classmethod
    def single_level(cls, v0, a=1.0, level=0.0, mass=1.0, hbar=1.0, shape="flat"):
        """One-channel scatterer (elastic only)."""
        return cls(
            levels=(level,),
            coupling=((1.0,),),
            profile=PotentialProfile(v0=v0, a=a, shape=shape),
            mass=mass,
            hbar=hbar,
        )


@dataclass(frozen=True)
class ThermalState:
    """Boltzmann populations of a SystemSpec at inverse temperature beta."""

    spec: SystemSpec
    beta: float
    populations: tuple[float, ...]
    partition: float

    def populations_array(self) -> np.ndarray:
        return np.asarray(self.populations, dtype=float)


def thermal_state(spec: SystemSpec, beta: float) -> ThermalState:
    """Thermal populations p_j = exp(-beta e_j) / Z; beta = 0 is uniform."""
    if not math.isfinite(beta) or beta < 0:
        raise InvalidParameterError(f"beta must be finite and >= 0, got {beta}")
    lv = spec.levels_array()
    # Shift by the ground level so the exponentials never overflow.
    w = np.exp(-beta * (lv - lv[0]))
    z_shifted = w.sum()
    p = w / z_shifted
    z = z_shifted * _safe_exp(-beta * lv[0])
    return ThermalState(spec=spec, beta=beta, populations=tuple(p), partition=z)


@dataclass(frozen=True)
class GapStructure:
    """Distinct positive level differences and their level-pair buckets.

    ``pairs[g]`` lists the (upper, lower) index pairs whose difference
    falls within GAP_TOL of gap value ``gaps[g]``.  ``pair_partition`` maps
    each pair to Z_{j'j} = exp(-beta e_{j'}) + exp(-beta e_j) at the beta
    the structure was built with.
    """

    spec: SystemSpec
    beta: float
    gaps: tuple[float, ...]
    pairs: tuple[tuple[tuple[int, int], ...], ...]
    pair_partition: dict = field(hash=False, compare=False, default_factory=dict)

    def pairs_for(self, delta: float, tol: float = GAP_TOL):
        """Level pairs (upper, lower) belonging to the gap closest to delta."""
        for g, bucket in zip(self.gaps, self.pairs):
            if abs(g - delta) <= tol:
                return bucket
        return ()


def gap_structure(spec: SystemSpec, beta: float, tol: float = GAP_TOL) -> GapStructure:
    """Bucket every ordered level pair with positive difference by its gap."""
    if not math.isfinite(beta) or beta < 0:
        raise InvalidParameterError(f"beta must be finite and >= 0, got {beta}")
    lv = spec.levels_array()
    n = spec.n_levels
    diffs = []
    for jp in range(n):
        for j in range(n):
            if lv[jp] > lv[j]:
                diffs.append((lv[jp] - lv[j], (jp, j)))
    diffs.sort(key=lambda t: t[0])
    gaps: list[float] = []
    buckets: list[list[tuple[int, int]]] = []
    for d, pair in diffs:
        if gaps and abs(d - gaps[-1]) <= tol:
            buckets[-1].append(pair)
        else:
            gaps.append(d)
            buckets.append([pair])
    zpair = {}
    for bucket in buckets:
        for jp, j in bucket:
            zpair[(jp, j)] = _safe_exp(-beta * lv[jp]) + _safe_exp(-beta * lv[j])
    return GapStructure(
        spec=spec,
        beta=beta,
        gaps=tuple(gaps),
        pairs=tuple(tuple(b) for b in buckets),
        pair_partition=zpair,
    )


@dataclass(frozen=True)
class ChannelBasis:
    """Open/closed bookkeeping for every level at fixed total energy E.

    Open channels carry a real wavenumber k_j = sqrt(2m(E - e_j))/hbar,
    closed channels a decay rate kappa_j = sqrt(2m(e_j - E))/hbar.
    """

    spec: SystemSpec
    energy: float
    open_flags: tuple[bool, ...]
    wavenumbers: tuple[float, ...]
    decay_rates: tuple[float, ...]

    @property
    def open_levels(self) -> tuple[int, ...]:
        return tuple(j for j, f in enumerate(self.open_flags) if f)

    @property
    def n_open(self) -> int:
        return sum(self.open_flags)

    @property
    def any_open(self) -> bool:
        return any(self.open_flags)


def channel_basis(spec: SystemSpec, energy: float) -> ChannelBasis:
    """Classify channels at total energy E; zero open channels is a valid
    result and is left for the caller to reject."""
    if not math.isfinite(energy):
        raise InvalidParameterError(f"energy must be finite, got {energy}")
    lv = spec.levels_array()
    scale = math.sqrt(2.0 * spec.mass) / spec.hbar
    flags, ks, kappas = [], [], []
    for e_j in lv:
        if energy > e_j:
            flags.append(True)
            ks.append(scale * math.sqrt(energy - e_j))
            kappas.append(0.0)
        else:
            flags.append(False)
            ks.append(0.0)
            kappas.append(scale * math.sqrt(e_j - energy))
    return ChannelBasis(
        spec=spec,
        energy=energy,
        open_flags=tuple(flags),
        wavenumbers=tuple(ks),
        decay_rates=tuple(kappas),
    )
