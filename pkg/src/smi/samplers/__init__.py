"""MCMC samplers for Cut and semi-modular posteriors."""
from .diagnostics import autocorrelation, effective_sample_size, mcse
from .mcmc import (
    McmcConfig,
    PosteriorDraws,
    run_augmented_mcmc,
    run_full_bayes,
    run_nested_mcmc,
    sample_theta_given_phi,
)

__all__ = [
    "McmcConfig",
    "PosteriorDraws",
    "autocorrelation",
    "effective_sample_size",
    "mcse",
    "run_augmented_mcmc",
    "run_full_bayes",
    "run_nested_mcmc",
    "sample_theta_given_phi",
]
