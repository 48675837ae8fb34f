"""Post-estimation adjustments for predict-then-optimize pricing."""

from .adjustment import (
    Policy,
    SolveStrategy,
    apply_adjustment,
    multi_A_matrix,
    multi_b_vector,
    multi_oracle_lambda,
    oracle_lambda_single,
    plugin_lambda_single,
)
from .bootstrap import BootstrapConfig, bootstrap_adjust_multi, bootstrap_adjust_single
from .demand_models import LinearDemand, LinearTwoParamDemand, LogLinearDemand, PowerLawDemand
from .estimation import Dataset, EstimateReport, fit, truncate_estimate

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "Dataset",
    "EstimateReport",
    "LinearDemand",
    "LinearTwoParamDemand",
    "LogLinearDemand",
    "Policy",
    "PowerLawDemand",
    "SolveStrategy",
    "apply_adjustment",
    "bootstrap_adjust_multi",
    "bootstrap_adjust_single",
    "fit",
    "multi_A_matrix",
    "multi_b_vector",
    "multi_oracle_lambda",
    "oracle_lambda_single",
    "plugin_lambda_single",
    "truncate_estimate",
]
