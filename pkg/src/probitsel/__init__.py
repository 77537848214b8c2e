"""Bayesian variable selection for probit mixed regression models.

A grouped (partially collapsed) Metropolis-within-Gibbs sampler selects
a fixed-size subset of predictors among thousands while accounting for
dataset-level random effects, with selection-frequency reporting,
refit/prediction, stability measurement, and a simulation harness.
"""

__version__ = "0.1.0"

from .conditionals import (
    BetaPosterior,
    UPosterior,
    beta_posterior,
    log_acceptance,
    log_marginal_gamma,
    sample_latent,
    u_posterior,
    update_covariance,
)
from .data import (
    DataSet,
    load_csv_dataset,
    save_csv_dataset,
    standardize_columns,
    stratified_split,
)
from .errors import DataError, NonSPDError, ProbitselError, SingularDesignError
from .params import (
    BlockDiagonalCov,
    ChainState,
    CovarianceStructure,
    DiagonalCov,
    GammaMask,
    GeneralCov,
    HyperParams,
)
from .predictor import (
    EvalMetrics,
    FittedModel,
    Prediction,
    evaluate,
    load_model,
    predict,
    predict_rows,
    refit_fixed_gamma,
    save_model,
)
from .rng import (
    RngHandle,
    sample_inverse_gamma,
    sample_inverse_wishart,
    sample_mvn,
    sample_truncated_normal,
)
from .sampler import (
    RunReport,
    load_run_report,
    mh_gamma_step,
    propose_swap,
    run_chain,
    save_run_report,
)
from .selection import SelectionRanking, cw_rel, rank_selections, select_top
from .simulate import (
    U_PRESETS,
    GroundTruth,
    SimConfig,
    generate,
    load_truth,
    save_truth,
    split_half_by_group,
)

__all__ = [
    "__version__",
    "BetaPosterior",
    "BlockDiagonalCov",
    "ChainState",
    "CovarianceStructure",
    "DataError",
    "DataSet",
    "DiagonalCov",
    "EvalMetrics",
    "FittedModel",
    "GammaMask",
    "GeneralCov",
    "GroundTruth",
    "HyperParams",
    "NonSPDError",
    "Prediction",
    "ProbitselError",
    "RngHandle",
    "RunReport",
    "SelectionRanking",
    "SimConfig",
    "SingularDesignError",
    "U_PRESETS",
    "UPosterior",
    "beta_posterior",
    "cw_rel",
    "evaluate",
    "generate",
    "load_csv_dataset",
    "load_model",
    "load_run_report",
    "load_truth",
    "log_acceptance",
    "log_marginal_gamma",
    "mh_gamma_step",
    "predict",
    "predict_rows",
    "propose_swap",
    "rank_selections",
    "refit_fixed_gamma",
    "run_chain",
    "sample_inverse_gamma",
    "sample_inverse_wishart",
    "sample_latent",
    "sample_mvn",
    "sample_truncated_normal",
    "save_csv_dataset",
    "save_model",
    "save_run_report",
    "save_truth",
    "select_top",
    "simulate",
    "split_half_by_group",
    "standardize_columns",
    "stratified_split",
    "u_posterior",
    "update_covariance",
]
