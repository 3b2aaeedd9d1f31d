"""Group sequential comparison of covariate-adjusted survival probabilities."""

from ._core import (
    Arm,
    ConvergenceError,
    Dataset,
    Decision,
    DegenerateDataError,
    DomainError,
    Error,
    GSDesign,
    Monitor,
    Scenario,
    SeparationError,
    Sides,
    SpendingFunction,
    SubjectRecord,
    ValidationError,
    boundaries,
    compare_sp,
    cox_wald,
    crossing_probabilities,
    fit_mple,
    generate_trial,
    km_compare,
    log_partial_likelihood,
    normal_cdf,
    normal_quantile,
    observed_information,
    parse_csv,
    partial_score,
    read_csv,
    run_cli,
    sha256_hex,
    snapshot,
)

__version__ = "0.1.0"
