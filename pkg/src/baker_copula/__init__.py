"""Bernstein copula (Baker's distribution) estimation.

Weights are fitted by EM with a constrained M-step; marginals are
estimated nonparametrically.  See :mod:`baker_copula.cli` for the command-line tool.
"""

from .copula import (
    BakerModel,
    HpmModel,
    ParamTensor,
    copula_cdf,
    copula_density,
    hpm_params,
    joint_density,
    sample,
    sample_copula,
    spearman_rho,
)
from .em import (
    FitResult,
    HpmFit,
    PseudoSample,
    fit,
    fit_hpm,
    fit_marginals,
    init_binning,
    profile_loglik_hpm,
    pseudo_from_data,
    rank_pseudo,
    select_aic,
)
from .errors import (
    BracketFailure,
    DegenerateDensity,
    DegenerateModel,
    DomainError,
    InvalidParams,
    InvalidTauBar,
    NonConvergence,
)
from .inference import covariance_r, var_density_at, var_qhat
from .marginals import MarginalModel, fit_continuous, fit_discrete
from .mstep import solve

__version__ = "0.1.0"
