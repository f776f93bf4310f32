from .conversions import (
    DEFAULT_DELTA,
    PSR_LEVELS,
    DomainError,
    PrivacyLevel,
    epsilon_to_psr,
    mi_to_psr,
    psr_to_epsilon,
    psr_to_mi,
)
from .noise import (
    Instability,
    NoiseProfile,
    PacEstimationConfig,
    PacEstimationError,
    add_noise,
    estimate_noise,
    measure_instability,
    noise_variances,
    pac_train,
    profile_from_instability,
    sample_noise,
)
from .projection import ProjectionBasis, compute_projection, estimate_projection

__all__ = [
    "DEFAULT_DELTA",
    "PSR_LEVELS",
    "DomainError",
    "Instability",
    "NoiseProfile",
    "PacEstimationConfig",
    "PacEstimationError",
    "PrivacyLevel",
    "ProjectionBasis",
    "add_noise",
    "compute_projection",
    "epsilon_to_psr",
    "estimate_noise",
    "estimate_projection",
    "measure_instability",
    "mi_to_psr",
    "noise_variances",
    "pac_train",
    "profile_from_instability",
    "psr_to_epsilon",
    "psr_to_mi",
    "sample_noise",
]
