"""Numerical laboratory for the (non-)Markov property of stochastic Volterra equations."""

from __future__ import annotations

from .affine_moments import (
    ConstantVol,
    DefectReport,
    Jacobi,
    LinearVol,
    ModelSpec,
    SqrtVol,
    exponential_fit_test,
    first_moment,
    first_moment_flow_defect,
    second_moment_linear,
    second_moment_linear_defect,
    second_moment_sqrt,
    second_moment_sqrt_affine,
    second_moment_sqrt_defect,
)
from .clt import RescaleSpec, clt_empirical_check, covariance_limit_check
from .gaussian_rl import (
    GaussianFDD,
    NonMarkovCertificate,
    cond_mean_asymptote,
    doob_defect,
    gaussian_condition,
    lemma31_certificate,
    rl_covariance,
    sample_gaussian_paths,
)
from .kernels import (
    Constant,
    Exponential,
    Flat,
    Fractional,
    GammaFractional,
    LogModulated,
    SmallTimeBounds,
    Tabulated,
    check_small_time_bounds,
    kernel_from_dict,
    lambda_n,
    limit_kernel,
)
from .mc_sim import PathEnsemble, conditional_prob_estimate, empirical_moment, simulate_sve
from .special_functions import gamma_fn, hyp2f1
from .volterra_solver import Grid, ResolventTable, resolvent_squared_kernel, resolvent_table, solve_linear_volterra

__version__ = "0.1.0"
