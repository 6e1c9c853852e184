"""Semi-modular inference for two-module Bayesian models.

Bayes, Cut, eta-SMI (power likelihood), gamma-SMI and delta-SMI
(kernel-smoothed likelihood) posteriors, with closed forms for the Gaussian
examples, nested and augmented MCMC, predictive selection of the influence
parameter, and exhaustive coherence checks on discrete models.
"""
from .closed_form import (
    BiasedDataConfig,
    GaussianPosterior,
    RegressionConfig,
    biased_phi_posterior,
    delta_from_eta,
    eta_delta_equivalence,
    exact_elpd_biased,
    pseudo_true_values,
    regression_smi_posterior,
)
from .core import (
    Bayes,
    Cut,
    Delta,
    Eta,
    Gamma,
    InfluenceSetting,
    TwoModuleModel,
    bayes_loss,
    biased_data_model,
    cut_loss,
    hpv_model,
    regression_model,
    smi_losses,
)
from .errors import SMIError
from .kernels import DiscreteUniform, GaussianKernel, KernelSpec, ScaledTopHat, TopHat
from .samplers import McmcConfig, PosteriorDraws, run_augmented_mcmc, run_nested_mcmc
from .selection import UtilityCurve, eta_to_delta_matching, loocv_elpd_z, pmse, waic_elpd

__version__ = "0.1.0"

__all__ = [
    "Bayes", "BiasedDataConfig", "Cut", "Delta", "DiscreteUniform", "Eta", "Gamma",
    "GaussianKernel", "GaussianPosterior", "InfluenceSetting", "KernelSpec", "McmcConfig",
    "PosteriorDraws", "RegressionConfig", "SMIError", "ScaledTopHat", "TopHat", "TwoModuleModel",
    "UtilityCurve", "bayes_loss", "biased_data_model", "biased_phi_posterior", "cut_loss",
    "delta_from_eta", "eta_delta_equivalence", "eta_to_delta_matching", "exact_elpd_biased",
    "hpv_model", "loocv_elpd_z", "pmse", "pseudo_true_values", "regression_model",
    "regression_smi_posterior", "run_augmented_mcmc", "run_nested_mcmc", "smi_losses",
    "waic_elpd",
]
