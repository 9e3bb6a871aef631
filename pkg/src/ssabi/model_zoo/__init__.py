"""Generative models, oracle posteriors, and the MH reference sampler."""
from .ar1 import (AR1Model, CovariateProcess, PARAM_NAMES, SYNTHETIC_COVARIATES,
                  ar1_log_likelihood, ar1_simulate, synthetic_countries)
from .gaussian import (AnalyticGaussianPosterior, AnalyticLikelihood, GaussianModel,
                       PriorAsPosterior, gaussian_analytic_posterior, gaussian_log_likelihood)
from .mcmc import MHConfig, effective_sample_size, mh_reference_posterior
from .oracle import OracleResult

__all__ = [
    "AR1Model", "AnalyticGaussianPosterior", "AnalyticLikelihood", "CovariateProcess",
    "GaussianModel", "MHConfig", "OracleResult", "PARAM_NAMES", "PriorAsPosterior",
    "SYNTHETIC_COVARIATES", "ar1_log_likelihood", "ar1_simulate", "effective_sample_size",
    "gaussian_analytic_posterior", "gaussian_log_likelihood", "mh_reference_posterior",
    "synthetic_countries",
]
