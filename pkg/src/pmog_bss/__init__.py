"""Blind source separation with a projected mixture-of-Gaussians estimator.

The core fits a 1-D Gaussian mixture jointly with the unit projection
vector generating the 1-D data; sequential application after PPCA
whitening recovers latent sources, with a fixed-point ICA baseline and a
Match/t-test evaluation harness alongside.
"""

__version__ = "0.1.0"

from .em import (
    EmConfig,
    KmeansConfig,
    NewtonConfig,
    NewtonState,
    PmogFit,
    QuadraticForm,
    assemble_quadratic,
    cubic_jacobian,
    cubic_residual,
    fit_pmog,
    m_step,
    solve_w,
    update_mu,
    update_pi,
    update_sigma2,
)
from .entropy import correlation_penalty, hyvarinen_entropy, pmog_entropy
from .fica import fica_extract
from .mog import (
    ConstraintSet,
    DataMatrix,
    MogParams,
    PriorConfig,
    Responsibilities,
    default_priors,
    e_step,
    log_likelihood_h1,
    log_prior_h2,
    mog_pdf,
    objective_h,
)
from .pipeline import BssResult, SourceDiagnostics, duplicate_check, extract_sources
from .ppca import PpcaFit, empirical_whiten, ppca_fit, reconstruct_sources, whiten
from .stats import (
    MatchReport,
    compare_matches,
    match_score,
    to_normality,
    welch_t_test,
)

__all__ = [
    "BssResult",
    "ConstraintSet",
    "DataMatrix",
    "EmConfig",
    "KmeansConfig",
    "MatchReport",
    "MogParams",
    "NewtonConfig",
    "NewtonState",
    "PmogFit",
    "PpcaFit",
    "PriorConfig",
    "QuadraticForm",
    "Responsibilities",
    "SourceDiagnostics",
    "assemble_quadratic",
    "compare_matches",
    "correlation_penalty",
    "cubic_jacobian",
    "cubic_residual",
    "default_priors",
    "duplicate_check",
    "e_step",
    "empirical_whiten",
    "extract_sources",
    "fica_extract",
    "fit_pmog",
    "hyvarinen_entropy",
    "log_likelihood_h1",
    "log_prior_h2",
    "m_step",
    "match_score",
    "mog_pdf",
    "objective_h",
    "pmog_entropy",
    "ppca_fit",
    "reconstruct_sources",
    "solve_w",
    "to_normality",
    "update_mu",
    "update_pi",
    "update_sigma2",
    "welch_t_test",
    "whiten",
]
