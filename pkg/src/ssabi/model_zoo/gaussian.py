"""Normal means model with conjugate posterior."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .oracle import OracleResult

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianModel:
    """``theta ~ N(mu_prior, var_prior I_D)``, ``x^(k) ~ N(theta, var_lik I_D)``, k = 1..K.

    ``var_lik`` defaults to ``K`` so the total information in ``x`` does not
    depend on ``K``.
    """

    D: int = 10
    K: int = 1
    mu_prior: float | np.ndarray = 0.0
    var_prior: float = 1.0
    var_lik: float | None = None
    name: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if self.D < 1 or self.K < 1:
            raise ConfigError("GaussianModel needs D >= 1 and K >= 1")
        if self.var_lik is None:
            self.var_lik = float(self.K)
        if self.var_prior <= 0 or self.var_lik <= 0:
            raise ConfigError("variances must be positive")
        self.mu_prior = np.broadcast_to(np.asarray(self.mu_prior, dtype=np.float64),
                                        (self.D,)).copy()

    @property
    def param_dim(self) -> int:
        return self.D

    @property
    def obs_shape(self) -> tuple[int, int]:
        return (self.K, self.D)

    @property
    def param_names(self) -> list[str]:
        return [f"theta_{d}" for d in range(self.D)]

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mu_prior + np.sqrt(self.var_prior) * rng.standard_normal((n, self.D))

    def log_prior(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        z2 = np.sum((theta - self.mu_prior) ** 2, axis=-1) / self.var_prior
        return -0.5 * z2 - 0.5 * self.D * (LOG_2PI + np.log(self.var_prior))

    def simulate(self, n: int, rng: np.random.Generator):
        """Return ``(theta, x)`` with shapes ``(n, D)`` and ``(n, K, D)``."""
        if n < 1:
            raise ConfigError("simulation count must be >= 1")
        theta = self.sample_prior(n, rng)
        x = theta[:, None, :] + np.sqrt(self.var_lik) * rng.standard_normal((n, self.K, self.D))
        return theta, x

    def log_likelihood(self, theta, x) -> np.ndarray:
        """``sum_k sum_d log N(x^(k)_d; theta_d, var_lik)``.

        ``x`` is one observation ``(K, D)`` with ``theta`` of shape ``(..., D)``,
        or a batch ``(B, K, D)`` with ``theta`` of shape ``(B, L, D)``.
        """
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            diff = x[..., :, :] - theta[..., None, :]
            axes = (-2, -1)
        else:
            diff = x[:, None, :, :] - theta[:, :, None, :]
            axes = (-2, -1)
        sq = np.sum(diff * diff, axis=axes)
        return -0.5 * sq / self.var_lik - 0.5 * self.K * self.D * (LOG_2PI + np.log(self.var_lik))

    def posterior_params(self, x_obs) -> tuple[np.ndarray, float]:
        x_obs = np.asarray(x_obs, dtype=np.float64).reshape(-1, self.D)
        K = x_obs.shape[0]
        xbar = x_obs.mean(axis=0)
        var_post = 1.0 / (1.0 / self.var_prior + K / self.var_lik)
        mean_post = var_post * (self.mu_prior / self.var_prior + K * xbar / self.var_lik)
        return mean_post, var_post

    def unlabeled(self, m: int, mu_star: float, rng: np.random.Generator) -> np.ndarray:
        """Unlabeled observations ``x*^(k) ~ N(mu_star, I_D)``, shape ``(m, K, D)``."""
        return mu_star + rng.standard_normal((m, self.K, self.D))

    def observation(self, mu_obs: float, rng: np.random.Generator,
                    var_obs: float = 0.01) -> np.ndarray:
        """Evaluation observation ``x_obs^(k) ~ N(mu_obs, var_obs I_D)``, shape ``(K, D)``."""
        return mu_obs + np.sqrt(var_obs) * rng.standard_normal((self.K, self.D))


def gaussian_log_likelihood(model: GaussianModel, theta, x) -> np.ndarray:
    return model.log_likelihood(theta, x)


def gaussian_analytic_posterior(model: GaussianModel, x_obs, n_samples: int = 0,
                                rng: np.random.Generator | None = None) -> OracleResult:
    mean, var = model.posterior_params(x_obs)
    sd = np.full(model.D, np.sqrt(var))
    samples = None
    if n_samples:
        samples = mean + sd * rng.standard_normal((n_samples, model.D))
    return OracleResult(kind="analytic", mean=mean, sd=sd, samples=samples)


class AnalyticGaussianPosterior:
    """Conjugate posterior exposed through the conditional-density interface
    (``log_prob(theta, x)``, ``sample(n, x, rng)``)."""

    def __init__(self, model: GaussianModel):
        self.model = model

    def log_prob(self, theta, x) -> np.ndarray:
        mean, var = self.model.posterior_params(x)
        theta = np.asarray(theta, dtype=np.float64)
        return (-0.5 * np.sum((theta - mean) ** 2, axis=-1) / var
                - 0.5 * self.model.D * (LOG_2PI + np.log(var)))

    def sample(self, n: int, x, rng: np.random.Generator) -> np.ndarray:
        mean, var = self.model.posterior_params(x)
        return mean + np.sqrt(var) * rng.standard_normal((n, self.model.D))


class PriorAsPosterior:
    """The prior, posing as a posterior that ignores its data."""

    def __init__(self, model):
        self.model = model

    def log_prob(self, theta, x=None) -> np.ndarray:
        return self.model.log_prior(theta)

    def sample(self, n: int, x, rng: np.random.Generator) -> np.ndarray:
        return self.model.sample_prior(n, rng)


class AnalyticLikelihood:
    """Known likelihood exposed as a conditional density ``q(x | theta)``."""

    def __init__(self, model):
        self.model = model

    def log_prob(self, x, theta) -> np.ndarray:
        return self.model.log_likelihood(theta, x)
