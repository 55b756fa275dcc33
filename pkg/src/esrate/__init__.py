"""esrate: a simulation and verification lab for the elitist (1+1) evolution
strategy with success-based step-size adaptation on strongly convex objectives.

The package simulates the exact chain, estimates empirical convergence rates
on quadratic benchmark families, evaluates the theoretical rate-bound
constants numerically, and verifies the supporting probabilistic
inequalities by Monte Carlo.
"""

from .analysis import (
    Assumption2Report,
    CheckResult,
    DriftEstimate,
    EstimateWithError,
    LemmaReport,
    QStats,
    check_assumption2,
    check_lemma_suite,
    estimate_drift,
    estimate_log_progress,
    estimate_q_stats,
    estimate_success_prob,
    q_extremes,
    quadratic_q_exact,
    sample_Q,
)
from .cli import cli_main
from .engine import (
    EsParams,
    EsState,
    Trajectory,
    init_default,
    p_target,
    params_for_rule,
    params_for_target,
    rng_stream,
    run,
    step,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    emit_csv,
    emit_plot,
    run_experiment,
)
from .objectives import (
    ObjectiveSpec,
    Transform,
    affine_pos,
    from_json,
    hessian_family,
    make_composite,
    perturbed_family,
    quadratic_diag,
    quadratic_perturbed,
    sphere,
    to_json,
)
from .rates import (
    RateEstimate,
    aggregate_rates,
    estimate_cr,
    estimate_cr_pooled,
    lower_rate_bound,
    scaled_rate,
    scaled_rate_smoothness,
    two_point_rate,
)
from .theory import (
    QExtremes,
    TheoryConstants,
    b_high,
    b_low,
    b_upper,
    build_constants,
    feasible_q_high_interval,
    feasible_q_interval,
    feasible_q_pair,
    potential_value,
    q_floor,
    std_normal_cdf,
    std_normal_quantile,
)

__version__ = "0.1.0"
