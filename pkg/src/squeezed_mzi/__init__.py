"""Optimized and adaptive Mach-Zehnder interferometry with number-squeezed
double-well ground states."""

__version__ = "0.1.0"

from .spinspace import (
    Moments,
    SpinSpace,
    StateVector,
    bloch_quasiprobability,
    build_operators,
    get_space,
    moments,
    pi_pulse_x,
    rotate_y,
)
from .groundstate import (
    DegenerateGroundStateError,
    WellParameters,
    coherent_state,
    exact_ground_state,
    gs_state,
    hamiltonian_matrix,
    sigma_of_u,
    twin_fock,
    u_of_sigma,
)
from .interferometer import (
    Channel,
    OutcomeDistribution,
    gaussian_approximation,
    mzi_output,
    outcome_distribution,
    sample_outcome,
)
from .bayes import (
    PhaseDistribution,
    PhaseGrid,
    averaged_inferred,
    confidence_interval,
    flat_prior,
    gaussian_prior,
    likelihood,
    map_estimate,
    posterior,
)
from .optimizer import (
    OptimizationResult,
    analytic_optimum,
    error_propagation_uncertainty,
    fitted_delta_theta_min,
    fitted_sigma_min,
    fitted_u_min,
    input_noise_law,
    numeric_optimum,
    robustness,
)
from .adaptive import (
    ProtocolConfig,
    ProtocolState,
    StepRecord,
    asymptotic_total_uncertainty,
    predict_delta_theta_M,
    predict_iterations,
    run,
    step,
)
from .montecarlo import EnsembleResult, coverage_report, run_ensemble
