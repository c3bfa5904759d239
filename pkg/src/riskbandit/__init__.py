"""Risk-averse multi-armed bandits: RA-LCB, risk estimators and regret experiments."""

from .arm_models import (
    ArmModel,
    Deterministic,
    OracleConstants,
    ScaledBernoulli,
    ScaledBeta,
    Uniform,
    cdf,
    fill_bounds,
    optimal_arm,
    oracle_constants,
    quantile,
    sample,
    true_risk,
)
from .empirical_stats import (
    SampleBuffer,
    centered_p_moment,
    empirical_cdf,
    empirical_quantile,
    sample_mean,
)
from .errors import (
    AssumptionViolated,
    BadConfig,
    ConfigError,
    CostOutOfRange,
    DegenerateGap,
    EmptyBuffer,
    MissingConstant,
    NonConvergence,
    NonPositiveRegret,
    NonUniqueOptimum,
    NotInitialized,
    ParseError,
    RiskBanditError,
    ValidationError,
)
from .losses import LossFunction
from .ralcb_policy import PolicyState
from .regret_lab import (
    EpisodeTrace,
    RegretCurve,
    bound_cvar,
    bound_md,
    bound_shortfall,
    decay_exponent,
    pseudo_regret,
    regret_curve,
    run_episode,
    simulate,
    theoretical_bound,
)
from .risk_measures import (
    BoundInputs,
    CVaR,
    Mean,
    MeanDeviation,
    RiskSpec,
    Shortfall,
    confidence_radius,
    empirical_cvar,
    empirical_md,
    empirical_risk,
    empirical_shortfall,
    running_estimator,
)

__version__ = "0.1.0"
