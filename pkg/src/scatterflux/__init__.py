"""Energy-resolved multichannel scattering maps for N-level systems and
the energy-fluctuation statistics they induce.

The toolkit solves the coupled-channel stationary scattering problem for
a structureless particle hitting a short-range potential that couples to
an N-level system, builds the resulting quantum map on the system, and
verifies fluctuation relations, bounds and thermal-ensemble identities.
"""

from .core import (
    GAP_TOL,
    ChannelBasis,
    GapStructure,
    PotentialProfile,
    SystemSpec,
    ThermalState,
    channel_basis,
    gap_structure,
    thermal_state,
)
from .ensemble import (
    ParticleEnergyDistribution,
    StochasticMatrix,
    detailed_balance_check,
    heat_exchange_ft_check,
    stochastic_matrix,
    unconditioned_distribution,
    unconditioned_dual_distribution,
)
from .errors import (
    ConfigError,
    DegenerateDistributionError,
    IllConditionedCompositionError,
    InvalidParameterError,
    InvalidStateError,
    NoOpenChannelError,
    QuadratureConvergenceError,
    ScatterfluxError,
    SpecMismatchError,
    SupportMismatchError,
    ThresholdProximityError,
    UnsupportedDegeneracyError,
)
from .fluct import (
    EnergyChangeDistribution,
    FluctuationReport,
    consumption_ceiling,
    dual_distribution,
    entropy_production,
    eta_direct,
    eta_gapsum,
    extraction_ceiling,
    forward_distribution,
    microreversibility_check,
    report,
    threshold_temperature,
    verify_fluctuation_relation,
)
from .mapbuild import (
    EigenoperatorSet,
    TransitionProbabilities,
    apply_map,
    effective_hamiltonian,
    eigenoperators,
    map_on_identity,
    transition_probabilities,
    transition_probabilities_averaged,
)
from .maplab import (
    KrausMap,
    dual_tpm_distribution,
    fluctuation_residual,
    free_energy_difference,
    gamma_dual_mass,
    modified_jarzynski,
    random_map,
    tpm_distribution,
)
from .solver import (
    DEFAULT_SLICES,
    THRESHOLD_TOL,
    LayerScattering,
    ScatteringMatrixE,
    clear_cache,
    compose_smatrix,
    finalize_smatrix,
    oracle_flat_profile,
    partial_smatrix,
    solve_smatrix,
    solve_smatrix_batch,
    square_barrier_transmission,
)

__version__ = "0.1.0"

__all__ = [
    "GAP_TOL",
    "DEFAULT_SLICES",
    "THRESHOLD_TOL",
    "ChannelBasis",
    "GapStructure",
    "PotentialProfile",
    "SystemSpec",
    "ThermalState",
    "channel_basis",
    "gap_structure",
    "thermal_state",
    "ParticleEnergyDistribution",
    "StochasticMatrix",
    "detailed_balance_check",
    "heat_exchange_ft_check",
    "stochastic_matrix",
    "unconditioned_distribution",
    "unconditioned_dual_distribution",
    "ScatterfluxError",
    "ConfigError",
    "DegenerateDistributionError",
    "IllConditionedCompositionError",
    "InvalidParameterError",
    "InvalidStateError",
    "NoOpenChannelError",
    "QuadratureConvergenceError",
    "SpecMismatchError",
    "SupportMismatchError",
    "ThresholdProximityError",
    "UnsupportedDegeneracyError",
    "EnergyChangeDistribution",
    "FluctuationReport",
    "consumption_ceiling",
    "dual_distribution",
    "entropy_production",
    "eta_direct",
    "eta_gapsum",
    "extraction_ceiling",
    "forward_distribution",
    "microreversibility_check",
    "report",
    "threshold_temperature",
    "verify_fluctuation_relation",
    "EigenoperatorSet",
    "TransitionProbabilities",
    "apply_map",
    "effective_hamiltonian",
    "eigenoperators",
    "map_on_identity",
    "transition_probabilities",
    "transition_probabilities_averaged",
    "KrausMap",
    "dual_tpm_distribution",
    "fluctuation_residual",
    "free_energy_difference",
    "gamma_dual_mass",
    "modified_jarzynski",
    "random_map",
    "tpm_distribution",
    "LayerScattering",
    "ScatteringMatrixE",
    "clear_cache",
    "compose_smatrix",
    "finalize_smatrix",
    "oracle_flat_profile",
    "partial_smatrix",
    "solve_smatrix",
    "solve_smatrix_batch",
    "square_barrier_transmission",
]
