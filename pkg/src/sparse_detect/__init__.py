"""Detection of sparse signals in linear regression with random designs."""

from .bounds import (
    chi2_divergence_gaussian_exact,
    chi2_divergence_mc,
    chi2_inverse_moment,
    gaussian_tail_bounds,
    lecam_floor,
    mixture_bound_closed,
    tau_reduced,
)
from .detect import (
    AlternativeFamily,
    AlternativeKind,
    RateBundle,
    estimate_norm_mse,
    estimate_risk,
    psi,
    rates,
    risk_curve,
    run_test,
)
from .errors import InvalidConfigError, MomentDoesNotExistError, SingularDesignError
from .estimator import EstimateResult, Regime, estimate, least_squares, q_hat
from .model import (
    DesignFamily,
    DesignSpec,
    PriorSpec,
    ProblemConfig,
    SparseVector,
    derive_seed,
    sample_prior,
    sample_regression,
)

__version__ = "0.1.0"

__all__ = [
    "AlternativeFamily", "AlternativeKind", "DesignFamily", "DesignSpec", "EstimateResult",
    "InvalidConfigError", "MomentDoesNotExistError", "PriorSpec", "ProblemConfig", "RateBundle",
    "Regime", "SingularDesignError", "SparseVector", "chi2_divergence_gaussian_exact",
    "chi2_divergence_mc", "chi2_inverse_moment", "derive_seed", "estimate", "estimate_norm_mse",
    "estimate_risk", "gaussian_tail_bounds", "lecam_floor", "least_squares", "mixture_bound_closed",
    "psi", "q_hat", "rates", "risk_curve", "run_test", "sample_prior", "sample_regression",
    "tau_reduced",
]
