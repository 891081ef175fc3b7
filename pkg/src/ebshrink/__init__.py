"""Empirical Bayes multi-task linear regression.

m regression tasks ("tissues") share one design matrix; each task's
coefficient vector is either exactly zero or drawn around a shared mean
with spread proportional to (X'X)^-1.  The package estimates the shared
prior by EM (tolerating missing responses), reports per-task association
probabilities and shrunken coefficients, and ships the simulation and
risk machinery used to evaluate the estimator.
"""

from .crossval import CvReport, kfold_cv, pmse, predict, r_squared, stouffer_combine
from .em import (
    FitOptions,
    FitResult,
    ResponsePanel,
    e_step,
    fit,
    init_params,
    m_step_complete,
    m_step_masked,
)
from .errors import (
    BadConfig,
    BadShape,
    DegenerateLabels,
    DegenerateResponsibilities,
    EbshrinkError,
    FoldTooSmall,
    NaInCovariates,
    NonFinite,
    ParseError,
    RankDeficient,
)
from .fileio import (
    MatrixFile,
    read_fit_json,
    read_matrix_tsv,
    write_fit_json,
    write_matrix_tsv,
)
from .linalg import Design, build_design, log_mvn_masked, log_mvn_projected, ols
from .posterior import (
    PriorParams,
    TissuePosterior,
    conditional_mean_active,
    log_bayes_factor,
    tissue_posterior,
)
from .simulate import (
    RiskEstimate,
    Setting,
    SimConfig,
    SimData,
    SimReport,
    auc,
    mc_bayes_risk,
    mse,
    ols_estimator,
    ols_risk_exact,
    oracle_posterior_estimator,
    run_replications,
    simulate_model_panel,
    simulate_setting,
)

__version__ = "0.1.0"

__all__ = [
    "BadConfig",
    "BadShape",
    "CvReport",
    "DegenerateLabels",
    "DegenerateResponsibilities",
    "Design",
    "EbshrinkError",
    "FitOptions",
    "FitResult",
    "FoldTooSmall",
    "MatrixFile",
    "NaInCovariates",
    "NonFinite",
    "ParseError",
    "PriorParams",
    "RankDeficient",
    "ResponsePanel",
    "RiskEstimate",
    "Setting",
    "SimConfig",
    "SimData",
    "SimReport",
    "TissuePosterior",
    "auc",
    "build_design",
    "conditional_mean_active",
    "e_step",
    "fit",
    "init_params",
    "kfold_cv",
    "log_bayes_factor",
    "log_mvn_masked",
    "log_mvn_projected",
    "m_step_complete",
    "m_step_masked",
    "mc_bayes_risk",
    "mse",
    "ols",
    "ols_estimator",
    "ols_risk_exact",
    "oracle_posterior_estimator",
    "pmse",
    "predict",
    "r_squared",
    "read_fit_json",
    "read_matrix_tsv",
    "run_replications",
    "simulate_model_panel",
    "simulate_setting",
    "stouffer_combine",
    "tissue_posterior",
    "write_fit_json",
    "write_matrix_tsv",
]
