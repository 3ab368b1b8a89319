"""Gaussian IGO (rank-mu CMA-ES) with a correlation-gated surrogate.

The package computes the constants behind the convex-quadratic descent
guarantees, checks every bound and identity by Monte-Carlo, and runs gated
optimisation experiments from a small command-line driver.
"""

from .config import ExperimentConfig, load_config, parse_config
from .correlation import (
    CorrelationEstimate,
    ExponentialAverage,
    MCEstimate,
    estimate_Kw,
    kendall_tau_b,
    pearson_weights,
    population_rho,
    population_tau,
)
from .errors import (
    ConfigError,
    HypothesisError,
    IGOError,
    InvalidInputError,
    StepRejectedError,
    SurrogateEvaluationError,
    UndefinedCorrelationError,
)
from .experiment import run_monotone_experiment
from .gaussian import (
    GaussianParams,
    NaturalGradientStep,
    QuadraticObjective,
    TheoryRates,
    admissible_lower_bound,
    apply_step,
    assemble_delta,
    expected_objective_J,
    grad_J,
    metric_norm_M_f,
    natural_grad_loglik,
    sample_population,
    theory_rates,
    trace_finv_h,
)
from .harness import (
    BoundCheckReport,
    DriftRecord,
    check_conditional_weight,
    check_descent,
    check_drift_theorem,
    check_integrals,
    check_kendall_bound,
    check_pearson_identity,
    check_quadratic_term,
    check_variance_identity,
)
from .ranking import WeightScheme, n_w_constant, rank_counts, utilities
from .rng import StreamKey
from .surrogate import (
    AdditiveNoise,
    BlockSwap,
    Exact,
    External,
    GateDecision,
    HessianPerturbed,
    Negated,
    SurrogateSpec,
    admissible_threshold,
    calibrate_noise,
    gate,
)
from .utility_poly import UtilityPolynomial, lipschitz_L_u, selection_gap_M_w, weight_variance_U_u

__version__ = "0.1.0"
