"""Actuator selection in linear time-invariant networks by greedy
maximization of controllability Gramian metrics, with certified bounds and
a ground-truth oracle suite."""

__version__ = "0.1.0"

from .errors import (
    BoundUnavailableError,
    ConvergenceError,
    EnumerationLimitError,
    GramselError,
    InstabilityError,
    LyapunovResidualError,
    NumericalError,
    PsdViolationError,
    SamplingExhaustedError,
    UncontrollableError,
    ValidationError,
)
from .gramian import (
    EnergyControl,
    Gramian,
    GramianCache,
    build_cache,
    finite_horizon_gramian,
    gramian_of,
    min_energy_input,
    observability_gramian,
    simulate_endpoint,
    solve_lyapunov,
)
from .greedy import (
    GreedyStep,
    SelectionProblem,
    SelectionResult,
    certified_gap,
    greedy_bound,
    greedy_select,
    lazy_greedy,
    two_stage_greedy,
)
from .lti import (
    CandidateActuator,
    LtiSystem,
    load_system,
    random_stable_system,
    save_system,
    spectral_abscissa,
)
from .metrics import (
    LAMBDA_MIN,
    LOG_DET,
    LOG_PROD_NONZERO,
    NTH_ROOT_LOG_DET,
    RANK,
    TRACE,
    TRACE_INVERSE,
    TRACE_PINV,
    MetricKind,
    RankPolicy,
    ellipsoid_volume,
    eval_metric,
    h2_norm_sq,
    metric_from_name,
    weighted_log_det,
)
from .oracle import (
    CounterexampleReport,
    ScoreTable,
    Violation,
    ViolationReport,
    brute_force,
    counterexample_check,
    lambda_min_counterexample_system,
    modularity_check,
    quadrature_gramian,
    ray_monotonicity_probe,
    submodularity_exhaustive,
    submodularity_sampler,
)
