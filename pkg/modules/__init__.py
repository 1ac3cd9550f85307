"""Impulse control toolkit modules"""

# Core imports
from .linalg_core import (
    CharPoly,
    LeastSquaresSolution,
    RankTolerance,
    Spectrum,
    char_poly,
    eigenvalues,
    expm,
    min_norm_lstsq,
    numerical_rank,
    pinv,
    singular_values,
)
from .ode_control import (
    CompanionSystem,
    ControlPair,
    FactorizationPair,
    InstantSequence,
    check_sampled_rank,
    critical_window,
    expm_companion_coeffs,
    factorization_coeff_check,
    instant_coefficient_matrix,
    is_kalman_controllable,
    kalman_matrix,
    sampled_controllability_matrix,
    steer_ode,
)
from .heat_spectral import (
    ControlSet,
    DomainSpec,
    ImpulseSchedule,
    OmegaGram,
    SpectralState,
    SystemSpec,
    adjoint_flow,
    apply_impulse,
    duality_pairing,
    eigenbasis,
    evolve,
    free_flow,
    omega_gram,
)
from .synthesis import (
    ReachabilityMap,
    SteeringResult,
    assemble_reachability,
    build_projections,
    null_control_full_domain,
    obstruction_witness,
    steer_approx,
    window_obstruction_experiment,
)

__version__ = "1.0.0"
