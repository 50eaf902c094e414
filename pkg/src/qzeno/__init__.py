"""Quantum Zeno effect of a noisy, continuously measured two-level system."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    NotPositiveSemidefinite,
    ValidationError,
    VariantMismatch,
)
from .model import (  # noqa: E402
    Liouvillian,
    ModelParams,
    NoiseCovariance,
    ShortTimeExpansion,
    build_liouvillian,
    propagate_bloch,
    propagate_bloch_ode,
    short_time_expansion,
    survival_closed_form,
    survival_probability,
    validate_noise_covariance,
)
from .spectral import (  # noqa: E402
    RegimeReport,
    SpectralDecomposition,
    classify_regime,
    decay_rate,
    eigenvalues_closed_form,
    eigenvalues_numeric,
    enhancement_interval,
    exceptional_point,
    offdiag_perturbation_error,
)

REFERENCE_NOISE = NoiseCovariance(g11=0.05, g22=0.1, g33=1.0, g23=0.3)

__all__ = [
    "REFERENCE_NOISE",
    "Liouvillian",
    "ModelParams",
    "NoiseCovariance",
    "NotPositiveSemidefinite",
    "RegimeReport",
    "ShortTimeExpansion",
    "SpectralDecomposition",
    "ValidationError",
    "VariantMismatch",
    "build_liouvillian",
    "classify_regime",
    "decay_rate",
    "eigenvalues_closed_form",
    "eigenvalues_numeric",
    "enhancement_interval",
    "exceptional_point",
    "offdiag_perturbation_error",
    "propagate_bloch",
    "propagate_bloch_ode",
    "short_time_expansion",
    "survival_closed_form",
    "survival_probability",
    "validate_noise_covariance",
]
