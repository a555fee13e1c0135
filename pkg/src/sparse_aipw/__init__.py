"""Sparse kernel imputation and group-lasso propensity AIPW for a response mean."""
from .data import IncompleteDataset
from .estimators import (
    AipwEstimate,
    EstimatorReport,
    aipw_estimate,
    cc_estimate,
    di_estimate,
    fit_propensity,
    naipw_estimate,
    prop_estimate,
    ps_estimate,
)
from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    NumericalError,
    SparseAipwError,
)
from .harness import ExperimentPlan, MetricsTable, normality_diagnostic, run_experiment
from .kernels import (
    KernelConfig,
    KrrModel,
    fit_krr,
    gaussian_kernel,
    gradient_eval,
    gradient_norms,
    kernel_matrix,
    median_bandwidth,
    predict,
)
from .propensity import (
    BcgdConfig,
    GroupStructure,
    PropensityModel,
    fit_group_lasso,
    fit_group_lasso_bic,
    fit_logistic_mle,
    predict_propensity,
)
from .selection import ActiveSet, ThresholdSearchConfig, fit_sparse_krr, select_active, stability_threshold
from .simulate import SimulationSpec, generate, supermarket_standin, true_theta

__all__ = [
    "ActiveSet", "AipwEstimate", "BcgdConfig", "ConvergenceError", "DegenerateInputError",
    "DimensionError", "DomainError", "EstimatorReport", "ExperimentPlan", "GroupStructure",
    "IncompleteDataset", "KernelConfig", "KrrModel", "MetricsTable", "NumericalError",
    "PropensityModel", "SimulationSpec", "SparseAipwError", "ThresholdSearchConfig",
    "aipw_estimate", "cc_estimate", "di_estimate", "fit_group_lasso", "fit_group_lasso_bic",
    "fit_krr", "fit_logistic_mle", "fit_propensity", "fit_sparse_krr", "gaussian_kernel",
    "generate", "gradient_eval", "gradient_norms", "kernel_matrix", "median_bandwidth",
    "naipw_estimate", "normality_diagnostic", "predict", "predict_propensity", "prop_estimate",
    "ps_estimate", "run_experiment", "select_active", "stability_threshold",
    "supermarket_standin", "true_theta",
]
