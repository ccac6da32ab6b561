"""Differentially private mean and regression estimators with auditing tools."""

from .core import (
    BudgetLedger,
    InvalidArgumentError,
    PrivacyBudget,
    RegressionData,
    UnsupportedError,
    derive_seed,
    make_rng,
)
from .mean import MeanConfig, private_mean, private_sparse_mean, truncated_mean
from .peeling import PeelingResult, peel, verify_peeling_accuracy
from .regression import (
    RegressionConfig,
    low_dim_theory_config,
    private_linear_regression,
    private_sparse_regression,
    sparse_theory_config,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger",
    "InvalidArgumentError",
    "MeanConfig",
    "PeelingResult",
    "PrivacyBudget",
    "RegressionConfig",
    "RegressionData",
    "UnsupportedError",
    "derive_seed",
    "low_dim_theory_config",
    "make_rng",
    "peel",
    "private_linear_regression",
    "private_mean",
    "private_sparse_mean",
    "private_sparse_regression",
    "sparse_theory_config",
    "truncated_mean",
    "verify_peeling_accuracy",
]
