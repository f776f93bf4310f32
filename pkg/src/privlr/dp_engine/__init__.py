from .accountant import (
    DEFAULT_ORDERS,
    DpParams,
    RdpCurve,
    UnreachableBudgetError,
    calibrate_sigma,
    epsilon_for,
    rdp_subsampled_gaussian,
    rdp_to_dp,
)
from .dpsgd import (
    DivergenceError,
    DpSgdConfig,
    clip_gradient,
    config_for_budget,
    config_from_dict,
    dpsgd_train,
    per_example_gradients,
    total_steps,
)

__all__ = [
    "DEFAULT_ORDERS",
    "DivergenceError",
    "DpParams",
    "DpSgdConfig",
    "RdpCurve",
    "UnreachableBudgetError",
    "calibrate_sigma",
    "clip_gradient",
    "config_for_budget",
    "config_from_dict",
    "dpsgd_train",
    "epsilon_for",
    "per_example_gradients",
    "rdp_subsampled_gaussian",
    "rdp_to_dp",
    "total_steps",
]
