"""Exception hierarchy for the scatterflux package."""


class ScatterfluxError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ScatterfluxError, ValueError):
    """A physical or numerical parameter is out of range or non-finite."""


class NoOpenChannelError(ScatterfluxError):
    """Scattering requested at an energy below every channel threshold."""


class ThresholdProximityError(ScatterfluxError):
    """Total energy too close to a channel threshold for stable flux
    normalization."""

    def __init__(self, energy, level_energy, tol):
        self.energy = energy
        self.level_energy = level_energy
        self.tol = tol
        super().__init__(
            f"total energy {energy!r} within {tol!r} of threshold {level_energy!r}"
        )


class IllConditionedCompositionError(ScatterfluxError):
    """Layer composition hit a numerically singular matching matrix."""

    def __init__(self, message, slice_index=None):
        self.slice_index = slice_index
        super().__init__(message)


class InvalidStateError(ScatterfluxError, ValueError):
    """Input density matrix is not Hermitian, positive, or normalized."""


class SpecMismatchError(ScatterfluxError):
    """Inputs were built from different system specifications."""


class SupportMismatchError(ScatterfluxError):
    """Two energy-change distributions live on incompatible supports."""


class DegenerateDistributionError(ScatterfluxError):
    """Distribution has no usable weight for the requested statistic."""


class UnsupportedDegeneracyError(ScatterfluxError):
    """A Hamiltonian with degenerate spectrum was supplied where a
    non-degenerate one is required."""


class QuadratureConvergenceError(ScatterfluxError):
    """Doubling the quadrature order changed the result beyond tolerance."""


class ConfigError(ScatterfluxError, ValueError):
    """Run configuration is malformed or contains invalid values."""
