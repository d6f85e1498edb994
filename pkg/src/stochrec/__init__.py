"""stochrec: noisy multiplicative recursions with decaying forcing.

Simulates the linear, feedback, square-root-scaled and deterministic
recursions, evaluates the moment functionals their stability criteria
consume, decides which criterion applies to a configuration, and checks
the predicted behaviour by seeded Monte Carlo.
"""

from .analysis import (
    CheckId,
    Conclusion,
    CriticalExponent,
    Verdict,
    admissible_alpha,
    check_deterministic_decay,
    check_homogeneous_log,
    check_ito_stabilization,
    check_liminf_zero,
    check_linear_decay_rate,
    check_linear_moment,
    check_nonlinear_mean,
    check_nonlinear_moment,
    critical_alpha,
    power_moment_envelope,
    power_split_bound,
)
from .engine import (
    Deterministic,
    EquationSpec,
    Feedback,
    Ito,
    Linear,
    MartingaleTracker,
    Nonlinear,
    PathSummary,
    SimOptions,
    simulate,
    step,
    validate_spec,
)
from .ensemble import (
    DecayProfile,
    EnsembleResult,
    Surrogate,
    conjecture_probe,
    decay_rate_check,
    derive_rng,
    liminf_estimator,
    run_ensemble,
)
from .noise import (
    Degenerate,
    InvalidModelError,
    NoiseModel,
    NotIIDError,
    ParetoTail,
    TwoPoint,
    UniformInterval,
    UnsupportedModelError,
    curvature_ratio,
    degenerate,
    draw_values,
    from_uniform,
    inverse_moment,
    log_moment,
    pareto_tail,
    power_moment,
    raw_moment,
    sample,
    support_bounds,
    two_point,
    uniform_interval,
    validate_positivity,
)
from .schedule import Schedule, ScheduleParseError, as_schedule
from .sequences import (
    Geometric,
    PowerLaw,
    Status,
    Summability,
    Table,
    ZERO,
    Zero,
    alpha_summable,
    exp_weighted_sum,
    forcing_values,
    geometric,
    moment_weighted_sum,
    power_law,
    prefix_sums,
    table,
    value_at,
)

__version__ = "0.1.0"
