"""Kernel equivalence tests with the kernel Stein discrepancy and the maximum mean discrepancy."""

from kequiv._backend import NAME as BACKEND
from kequiv.equivalence import (
    TestConfig,
    TestReport,
    e_ksd_boot,
    e_ksd_normal,
    e_mmd_boot,
    e_mmd_normal,
    norm_ppf,
    select_margin_ksd,
    select_margin_mmd,
)
from kequiv.experiments import (
    ExperimentPlan,
    PlanConfig,
    RejectionCurve,
    population_discrepancy_mc,
    rbm_perturbation_experiment,
    run_rejection_curve,
)
from kequiv.kernels import KernelSpec, eval_kernel, grad1_kernel, grad12_trace, median_heuristic
from kequiv.ksd import SteinContext, ksd_bootstrap_sq_samples, ksd_jackknife_variance, ksd_sq_vstat, stein_kernel
from kequiv.mmd import (
    MmdContext,
    mmd_jackknife_variance,
    mmd_one_sample_bootstrap_sq,
    mmd_pair_bootstrap,
    mmd_sq_vstat,
)
from kequiv.models import CallableScore, GaussianModel, GbRbmModel
from kequiv.resampling import empirical_quantile, multinomial_weights

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CallableScore",
    "ExperimentPlan",
    "GaussianModel",
    "GbRbmModel",
    "KernelSpec",
    "MmdContext",
    "PlanConfig",
    "RejectionCurve",
    "SteinContext",
    "TestConfig",
    "TestReport",
    "e_ksd_boot",
    "e_ksd_normal",
    "e_mmd_boot",
    "e_mmd_normal",
    "empirical_quantile",
    "eval_kernel",
    "grad1_kernel",
    "grad12_trace",
    "ksd_bootstrap_sq_samples",
    "ksd_jackknife_variance",
    "ksd_sq_vstat",
    "median_heuristic",
    "mmd_jackknife_variance",
    "mmd_one_sample_bootstrap_sq",
    "mmd_pair_bootstrap",
    "mmd_sq_vstat",
    "multinomial_weights",
    "norm_ppf",
    "population_discrepancy_mc",
    "rbm_perturbation_experiment",
    "run_rejection_curve",
    "select_margin_ksd",
    "select_margin_mmd",
    "stein_kernel",
]
