"""Multichannel 1D scattering solver.

The potential support [-a/2, +a/2] is sliced into piecewise-constant
layers.  Each layer is diagonalized once per (spec, M); at a given total
energy the layer stack is contracted with the Redheffer star product,
which never forms products of growing evanescent exponentials and is
therefore stable for arbitrarily many closed channels.

The public S-matrix is energy normalized: entries carry sqrt(k'/k) flux
factors and reference phases are chosen so that a vanishing potential
gives perfect transmission with zero phase.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import ChannelBasis, SystemSpec, channel_basis
from .errors import (
    IllConditionedCompositionError,
    InvalidParameterError,
    NoOpenChannelError,
    ThresholdProximityError,
)

DEFAULT_SLICES = 12000
THRESHOLD_TOL = 1e-8

_DIRECTIONS = ("+", "-")


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class SliceGrid:
    """Piecewise-constant sampling of the channel potential.

    ``matrices[i]`` is the full N x N channel matrix of slice i, i.e.
    v(x_i) * V0 * (pi/2) * W + diag(e) evaluated at the slice midpoint.
    """

    spec: SystemSpec
    m_slices: int
    midpoints: np.ndarray
    width: float
    matrices: np.ndarray


def build_grid(spec: SystemSpec, m_slices: int) -> SliceGrid:
    """Midpoint sampling of the potential on M equal slices of the support."""
    if m_slices < 1:
        raise InvalidParameterError("m_slices must be >= 1")
    a = spec.profile.a
    width = a / m_slices
    mid = -a / 2.0 + width * (np.arange(m_slices) + 0.5)
    env = spec.profile.envelope(mid)
    w = spec.coupling_array()
    diag = np.diag(spec.levels_array())
    amp = spec.profile.v0 * (np.pi / 2.0)
    mats = env[:, None, None] * (amp * w)[None, :, :] + diag[None, :, :]
    return SliceGrid(
        spec=spec, m_slices=m_slices, midpoints=mid, width=width, matrices=mats
    )


@lru_cache(maxsize=64)
def _grid_modes(spec: SystemSpec, m_slices: int):
    """Cached eigendecomposition of every slice matrix.

    Returns (eigvals (M, N), eigvecs (M, N, N), width); the decomposition
    is energy independent and reused across all solves on this grid.
    """
    grid = build_grid(spec, m_slices)
    vals, vecs = np.linalg.eigh(grid.matrices)
    return vals, vecs, grid.width


# ---------------------------------------------------------------------------
# star product


@dataclass(frozen=True)
class LayerScattering:
    """Two-sided scattering blocks of a layer stack in amplitude form.

    With u, v the incoming amplitudes from the left and right, the
    outgoing amplitudes are r = s11 u + s12 v (left) and
    t = s21 u + s22 v (right).  Amplitudes are referenced at the layer
    edges, so evanescent components only ever decay.
    """

    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "LayerScattering":
        z = np.zeros((n, n), dtype=complex)
        i = np.eye(n, dtype=complex)
        return cls(s11=z.copy(), s12=i.copy(), s21=i.copy(), s22=z.copy())


def compose_smatrix(left: LayerScattering, right: LayerScattering) -> LayerScattering:
    """Redheffer star product of two adjacent layer stacks."""
    n = left.s11.shape[-1]
    if right.s11.shape[-1] != n:
        raise IllConditionedCompositionError("incompatible channel bases")
    eye = np.eye(n, dtype=complex)
    try:
        m1 = np.linalg.inv(eye - right.s11 @ left.s22)
        m2 = np.linalg.inv(eye - left.s22 @ right.s11)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedCompositionError(
            f"singular interface-matching matrix: {exc}"
        ) from exc
    return LayerScattering(
        s11=left.s11 + left.s12 @ m1 @ right.s11 @ left.s21,
        s12=left.s12 @ m1 @ right.s12,
        s21=right.s21 @ m2 @ left.s21,
        s22=right.s22 + right.s21 @ m2 @ left.s22 @ right.s12,
    )


def _star_batch(a, b):
    # a, b: 4-tuples of (K, n, n) blocks
    a11, a12, a21, a22 = a
    b11, b12, b21, b22 = b
    eye = np.eye(a11.shape[-1], dtype=complex)
    m1 = np.linalg.inv(eye - b11 @ a22)
    m2 = np.linalg.inv(eye - a22 @ b11)
    return (
        a11 + a12 @ m1 @ b11 @ a21,
        a12 @ m1 @ b12,
        b21 @ m2 @ a21,
        b22 + b21 @ m2 @ a22 @ b12,
    )


def _interface_batch(rot, q_left, q_right):
    """Interface scattering blocks between two media, batched over energy.

    rot is the (N, N) basis rotation U_left^T U_right; q_left, q_right are
    (K, N) complex mode wavenumbers (Im q >= 0 for evanescent modes).
    """
    c = rot[None, :, :].astype(complex)
    d = c * (q_right[:, None, :] / q_left[:, :, None])
    inv = np.linalg.inv(c + d)
    eye = np.eye(rot.shape[0], dtype=complex)
    s21 = 2.0 * inv
    s22 = -(inv @ (c - d))
    s11 = c @ s21 - eye
    s12 = 2.0 * ((c @ inv) @ d)
    return s11, s12, s21, s22


def _mode_wavenumbers(spec, energies, channel_energies):
    scale = math.sqrt(2.0 * spec.mass) / spec.hbar
    arg = energies[:, None] - channel_energies[None, :] + 0j
    return scale * np.sqrt(arg)


def _fold_blocks(spec, energies, m_slices, first_slice=0, last_slice=None):
    """Contract layers [first_slice, last_slice) for a batch of energies.

    Returns four (K, N, N) amplitude blocks referenced at the range edges,
    with free channel media assumed on both sides of the range.
    """
    vals, vecs, width = _grid_modes(spec, m_slices)
    stop = m_slices if last_slice is None else last_slice
    q_ext = _mode_wavenumbers(spec, energies, spec.levels_array())

    # Entry interface: exterior channel basis into the first slice.
    q_slice = _mode_wavenumbers(spec, energies, vals[first_slice])
    blocks = _interface_batch(vecs[first_slice], q_ext, q_slice)

    for l in range(first_slice, stop):
        q_l = _mode_wavenumbers(spec, energies, vals[l])
        if l + 1 < stop:
            rot = vecs[l].T @ vecs[l + 1]
            q_r = _mode_wavenumbers(spec, energies, vals[l + 1])
        else:
            rot = vecs[l].T
            q_r = q_ext
        b11, b12, b21, b22 = _interface_batch(rot, q_l, q_r)
        p = np.exp(1j * q_l * width)
        t11 = p[:, :, None] * b11 * p[:, None, :]
        t12 = p[:, :, None] * b12
        t21 = b21 * p[:, None, :]
        blocks = _star_batch(blocks, (t11, t12, t21, b22))
    return blocks


# ---------------------------------------------------------------------------
# public S-matrix


@dataclass(frozen=True)
class ScatteringMatrixE:
    """Energy-normalized multichannel S-matrix at fixed total energy.

    Rows and columns run over (direction, open level) with the block
    layout [("+", j) for open j] + [("-", j) for open j]; "+" labels
    motion toward positive x.  s is unitary within solver tolerance.
    """

    spec: SystemSpec
    energy: float
    open_levels: tuple[int, ...]
    wavenumbers: tuple[float, ...]
    s: np.ndarray

    @property
    def n_open(self) -> int:
        return len(self.open_levels)

    def _index(self, direction: str, level: int) -> int:
        if direction not in _DIRECTIONS:
            raise KeyError(f"unknown direction {direction!r}")
        pos = self.open_levels.index(level)
        return pos + (0 if direction == "+" else self.n_open)

    def block(self, out_direction: str, in_direction: str) -> np.ndarray:
        """n_open x n_open amplitude block s^{out,in}."""
        n = self.n_open
        r0 = 0 if out_direction == "+" else n
        c0 = 0 if in_direction == "+" else n
        return self.s[r0 : r0 + n, c0 : c0 + n]

    def entry(self, out_direction: str, out_level: int, in_direction: str, in_level: int) -> complex:
        return self.s[self._index(out_direction, out_level), self._index(in_direction, in_level)]

    def unitarity_residual(self) -> float:
        prod = self.s.conj().T @ self.s
        return float(np.max(np.abs(prod - np.eye(self.s.shape[0]))))

    def prob_matrix(self) -> np.ndarray:
        """|s|^2, a bistochastic matrix over (direction, open level)."""
        return np.abs(self.s) ** 2

    def transition_table(self, in_direction: str) -> np.ndarray:
        """N x N table P^{in}_{j'j} = sum_{out} |s^{out,in}_{j'j}|^2.

        Rows/columns of closed levels are zero; note every column refers
        to this matrix's single total energy.
        """
        n_levels = self.spec.n_levels
        table = np.zeros((n_levels, n_levels))
        for out_direction in _DIRECTIONS:
            blk = np.abs(self.block(out_direction, in_direction)) ** 2
            for r, jp in enumerate(self.open_levels):
                for c, j in enumerate(self.open_levels):
                    table[jp, j] += blk[r, c]
        return table


def _guard_thresholds(spec, energy, tol):
    for e_j in spec.levels:
        if abs(energy - e_j) < tol:
            raise ThresholdProximityError(energy, e_j, tol)


def _assemble(spec, energy, blocks, tol) -> ScatteringMatrixE:
    """Restrict amplitude blocks to open channels and flux-normalize."""
    cb = channel_basis(spec, energy)
    if not cb.any_open:
        raise NoOpenChannelError(f"no open channel at total energy {energy}")
    open_idx = np.array(cb.open_levels)
    k_open = np.array([cb.wavenumbers[j] for j in cb.open_levels])
    a = spec.profile.a
    phase = np.exp(-1j * k_open * a / 2.0)
    row = phase * np.sqrt(k_open)
    col = phase / np.sqrt(k_open)
    sel = np.ix_(open_idx, open_idx)

    def norm(block):
        return row[:, None] * block[sel] * col[None, :]

    s11, s12, s21, s22 = blocks
    s = np.block([[norm(s21), norm(s22)], [norm(s11), norm(s12)]])
    return ScatteringMatrixE(
        spec=spec,
        energy=float(energy),
        open_levels=cb.open_levels,
        wavenumbers=tuple(k_open),
        s=s,
    )


_CACHE_LOCK = threading.Lock()
_CACHE: dict = {}
_CACHE_ROUND = 9  # matches the gap-bucketing tolerance


def _cache_key(spec, m_slices, tol):
    return (spec, m_slices, tol)


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def solve_smatrix_batch(
    spec: SystemSpec,
    energies,
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
) -> list[ScatteringMatrixE]:
    """Solve the coupled-channel equations at several total energies.

    The layer stack is contracted once for the whole batch, which is much
    faster than per-energy solves.  Results are cached per (spec, M).
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    for e in energies:
        if not math.isfinite(e):
            raise InvalidParameterError(f"non-finite total energy {e}")
        _guard_thresholds(spec, e, threshold_tol)
        if e <= spec.levels[0]:
            raise NoOpenChannelError(f"no open channel at total energy {e}")

    key = _cache_key(spec, m_slices, threshold_tol)
    with _CACHE_LOCK:
        store = _CACHE.setdefault(key, {})
        missing = [e for e in energies if round(e, _CACHE_ROUND) not in store]
    if missing:
        uniq = sorted({round(e, _CACHE_ROUND): e for e in missing}.values())
        blocks = _fold_blocks(spec, np.asarray(uniq), m_slices)
        solved = {}
        for i, e in enumerate(uniq):
            sub = tuple(b[i] for b in blocks)
            solved[round(e, _CACHE_ROUND)] = _assemble(spec, e, sub, threshold_tol)
        with _CACHE_LOCK:
            store.update(solved)
    with _CACHE_LOCK:
        return [store[round(e, _CACHE_ROUND)] for e in energies]


def solve_smatrix(
    spec: SystemSpec,
    energy: float,
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
) -> ScatteringMatrixE:
    """Energy-normalized S-matrix of the sliced potential at total energy E."""
    return solve_smatrix_batch(spec, [energy], m_slices, threshold_tol)[0]


def partial_smatrix(
    spec: SystemSpec,
    energy: float,
    first_slice: int,
    last_slice: int,
    m_slices: int = DEFAULT_SLICES,
    threshold_tol: float = THRESHOLD_TOL,
) -> LayerScattering:
    """Amplitude scattering blocks of slices [first, last) of the support.

    Composable with compose_smatrix; composing the two halves of the
    support reproduces the full solve.
    """
    _guard_thresholds(spec, energy, threshold_tol)
    blocks = _fold_blocks(
        spec,
        np.asarray([float(energy)]),
        m_slices,
        first_slice=first_slice,
        last_slice=last_slice,
    )
    return LayerScattering(*(b[0] for b in blocks))


def finalize_smatrix(
    spec: SystemSpec,
    energy: float,
    layer: LayerScattering,
    threshold_tol: float = THRESHOLD_TOL,
) -> ScatteringMatrixE:
    """Flux-normalize amplitude blocks spanning the whole support."""
    return _assemble(
        spec, energy, (layer.s11, layer.s12, layer.s21, layer.s22), threshold_tol
    )


# ---------------------------------------------------------------------------
# oracles


def oracle_flat_profile(
    spec: SystemSpec, energy: float, threshold_tol: float = THRESHOLD_TOL
) -> ScatteringMatrixE:
    """Closed-form S-matrix for a flat (piecewise-constant) profile.

    Diagonalizes the constant channel matrix once and matches plane waves
    at the two interfaces by a direct linear solve; independent of the
    star-product machinery.  Validates the general solver.
    """
    if spec.profile.shape != "flat":
        raise InvalidParameterError("oracle requires a flat profile")
    _guard_thresholds(spec, energy, threshold_tol)
    cb = channel_basis(spec, energy)
    if not cb.any_open:
        raise NoOpenChannelError(f"no open channel at total energy {energy}")

    n = spec.n_levels
    vmat = np.diag(spec.levels_array()) + spec.profile.v0 * (np.pi / 2.0) * spec.coupling_array()
    d, u = np.linalg.eigh(vmat)
    scale = math.sqrt(2.0 * spec.mass) / spec.hbar
    q = scale * np.sqrt(energy - d + 0j)
    k = scale * np.sqrt(energy - spec.levels_array() + 0j)
    length = spec.profile.a
    ph = np.exp(1j * q * length)

    # Unknowns [r, cp, cm, t]; continuity of psi and psi' at both edges.
    mat = np.zeros((4 * n, 4 * n), dtype=complex)
    eye = np.eye(n)
    # x = -a/2:  r - U(cp + ph*cm) = -delta_J
    mat[0:n, 0:n] = eye
    mat[0:n, n : 2 * n] = -u
    mat[0:n, 2 * n : 3 * n] = -u * ph[None, :]
    # derivative:  -ik r - U iq (cp - ph*cm) = -ik delta_J
    mat[n : 2 * n, 0:n] = -1j * np.diag(k)
    mat[n : 2 * n, n : 2 * n] = -u * (1j * q)[None, :]
    mat[n : 2 * n, 2 * n : 3 * n] = u * (1j * q * ph)[None, :]
    # x = +a/2:  U(ph*cp + cm) - t = 0
    mat[2 * n : 3 * n, n : 2 * n] = u * ph[None, :]
    mat[2 * n : 3 * n, 2 * n : 3 * n] = u
    mat[2 * n : 3 * n, 3 * n : 4 * n] = -eye
    # derivative:  U iq (ph*cp - cm) - ik t = 0
    mat[3 * n : 4 * n, n : 2 * n] = u * (1j * q * ph)[None, :]
    mat[3 * n : 4 * n, 2 * n : 3 * n] = -u * (1j * q)[None, :]
    mat[3 * n : 4 * n, 3 * n : 4 * n] = -1j * np.diag(k)

    rhs = np.zeros((4 * n, n), dtype=complex)
    rhs[0:n, :] = -eye
    rhs[n : 2 * n, :] = -1j * np.diag(k)
    sol = np.linalg.solve(mat, rhs)
    r_amp = sol[0:n, :]
    t_amp = sol[3 * n : 4 * n, :]

    # Right-incoming: the slab is mirror symmetric (constant matrix), so
    # reflection and transmission are direction independent.
    blocks = (r_amp, t_amp, t_amp, r_amp)  # (s11, s12, s21, s22)
    return _assemble(spec, energy, blocks, threshold_tol)


def square_barrier_transmission(
    energy: float, height: float, width: float, mass: float = 1.0, hbar: float = 1.0
) -> float:
    """Analytic single-channel square-barrier transmission probability."""
    if energy <= 0:
        raise InvalidParameterError("energy must be > 0")
    scale = math.sqrt(2.0 * mass) / hbar
    k = scale * math.sqrt(energy)
    diff = energy - height
    if abs(diff) < 1e-12:
        return 1.0 / (1.0 + (k * k * width * width) / 4.0)
    if diff > 0:
        kp = scale * math.sqrt(diff)
        num = (k * k - kp * kp) ** 2 * math.sin(kp * width) ** 2
        return 1.0 / (1.0 + num / (4.0 * k * k * kp * kp))
    kappa = scale * math.sqrt(-diff)
    num = (k * k + kappa * kappa) ** 2 * math.sinh(kappa * width) ** 2
    return 1.0 / (1.0 + num / (4.0 * k * k * kappa * kappa))
