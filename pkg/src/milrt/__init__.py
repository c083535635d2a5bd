"""Hypothesis testing with multiply imputed datasets.

The package bundles the classical and the stacked-dataset pooled Wald and
likelihood-ratio tests, estimators of the fraction of missing information,
proper Bayesian imputers, and a Monte Carlo harness for size/power studies.
"""

from .combine import (
    FmiEstimate,
    NullDistSpec,
    PooledMoments,
    TestResult,
    df_denominator,
    estimate_r,
    pool_moments,
    run_test,
    sample_null_statistic,
    stacked_plus_test,
    stacked_robust_test,
)
from .exceptions import ConvergenceError, DegenerateDataError, FactorizationError
from .imputers import (
    CompletedDatasets,
    ContingencyTable,
    MissingPattern,
    MonotoneExperimentConfig,
    MvnExperimentConfig,
    generate_monotone_experiment_data,
    generate_mvn_experiment_data,
    impute_multinomial_dirichlet,
    impute_monotone_regression,
    impute_mvn_jeffreys,
)
from .models import (
    Ar1Model,
    Ar1Params,
    LikelihoodModel,
    MultinomialModel,
    MvnModel,
    MvnParams,
    WaldComponents,
    make_model,
    reparametrize,
)
from .numkit import ChiSquare, FDist, RngStream

__version__ = "0.1.0"

__all__ = [
    "Ar1Model",
    "Ar1Params",
    "ChiSquare",
    "CompletedDatasets",
    "ContingencyTable",
    "ConvergenceError",
    "DegenerateDataError",
    "FDist",
    "FactorizationError",
    "FmiEstimate",
    "LikelihoodModel",
    "MissingPattern",
    "MonotoneExperimentConfig",
    "MultinomialModel",
    "MvnExperimentConfig",
    "MvnModel",
    "MvnParams",
    "NullDistSpec",
    "PooledMoments",
    "RngStream",
    "TestResult",
    "WaldComponents",
    "df_denominator",
    "estimate_r",
    "generate_monotone_experiment_data",
    "generate_mvn_experiment_data",
    "impute_multinomial_dirichlet",
    "impute_monotone_regression",
    "impute_mvn_jeffreys",
    "make_model",
    "pool_moments",
    "reparametrize",
    "run_test",
    "sample_null_statistic",
    "stacked_plus_test",
    "stacked_robust_test",
    "__version__",
]
