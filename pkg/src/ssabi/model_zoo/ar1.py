"""AR(1) model with two covariates, on differenced series.

An observation is an array of shape ``(T+1, 3)`` whose columns are the target
``y_t`` and the standardized covariates ``u_t`` and ``w_t`` for t = 0..T.  The
first target value ``y_0`` is conditioned on; the likelihood covers the T
transitions ``y_{t+1} ~ N(alpha + beta y_t + gamma u_t + delta w_t, sigma)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..errors import ConfigError, DataError

LOG_2PI = float(np.log(2.0 * np.pi))

PARAM_NAMES = ("alpha", "beta", "gamma", "delta", "log_sigma")
PRIOR_MEAN = np.array([0.0, 0.0, 0.0, 0.0, -1.0])
PRIOR_SD = np.array([0.5, 0.2, 0.5, 0.5, 0.5])


def ar1_simulate(params, u, w, y0: float, T: int, rng: np.random.Generator) -> np.ndarray:
    """Simulate ``y_1..y_T`` given ``y_0`` and covariates of length >= T."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if len(u) < T or len(w) < T:
        raise DataError("covariate arrays shorter than T")
    if not (np.all(np.isfinite(u[:T])) and np.all(np.isfinite(w[:T]))):
        raise DataError("non-finite covariates")
    alpha, beta, gamma, delta, log_sigma = np.asarray(params, dtype=np.float64)
    sigma = np.exp(log_sigma)
    eps = rng.standard_normal(T)
    out = np.empty(T)
    prev = float(y0)
    for t in range(T):
        prev = alpha + beta * prev + gamma * u[t] + delta * w[t] + sigma * eps[t]
        out[t] = prev
    return out


def ar1_log_likelihood(params, series, covariates=None) -> float:
    """Sum of step-wise normal log-densities.

    ``series`` is ``y_0..y_T``; ``covariates`` is ``(u, w)``.  With
    ``covariates=None`` the series is a full ``(T+1, 3)`` observation.
    """
    if covariates is None:
        obs = np.asarray(series, dtype=np.float64)
        y, u, w = obs[:, 0], obs[:, 1], obs[:, 2]
    else:
        y = np.asarray(series, dtype=np.float64)
        u, w = covariates
        u = np.asarray(u, dtype=np.float64)[:len(y)]
        w = np.asarray(w, dtype=np.float64)[:len(y)]
    if len(y) < 2:
        raise DataError("need at least one transition")
    return float(_kernels.ar1_loglik(np.asarray(params, dtype=np.float64)[None, :], y, u, w)[0])


@dataclass
class CovariateProcess:
    """Generator for covariate paths ``(u, w)`` in standardized units.

    Each path is ``level + slope * s + noise_sd * eps`` with ``s`` running
    linearly from -1 to 1, ``level ~ N(0, level_sd)``, ``slope ~ N(0, slope_sd)``.
    The simulator default (zero level and slope spread, unit noise) gives iid
    standard-normal covariates.
    """

    level_sd: float = 0.0
    slope_sd: float = 0.0
    noise_sd: float = 1.0

    def draw(self, n: int, length: int, rng: np.random.Generator) -> np.ndarray:
        s = np.linspace(-1.0, 1.0, length)
        level = self.level_sd * rng.standard_normal((n, 1, 2))
        slope = self.slope_sd * rng.standard_normal((n, 1, 2))
        noise = self.noise_sd * rng.standard_normal((n, length, 2))
        return level + slope * s[None, :, None] + noise


@dataclass
class AR1Model:
    T: int = 15
    covariates: CovariateProcess = field(default_factory=CovariateProcess)
    y0_sd: float = 0.5
    name: str = field(default="ar1", init=False)

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        self.prior_mean = PRIOR_MEAN.copy()
        self.prior_sd = PRIOR_SD.copy()

    @property
    def param_dim(self) -> int:
        return 5

    @property
    def obs_shape(self) -> tuple[int, int]:
        return (self.T + 1, 3)

    @property
    def param_names(self) -> list[str]:
        return list(PARAM_NAMES)

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.prior_mean + self.prior_sd * rng.standard_normal((n, 5))

    def log_prior(self, theta) -> np.ndarray:
        z = (np.asarray(theta, dtype=np.float64) - self.prior_mean) / self.prior_sd
        return np.sum(-0.5 * z * z - np.log(self.prior_sd) - 0.5 * LOG_2PI, axis=-1)

    def simulate_given(self, theta: np.ndarray, cov: np.ndarray, y0: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
        """Vectorized simulation for rows of ``theta`` with covariates ``(n, T+1, 2)``."""
        n = theta.shape[0]
        T = cov.shape[1] - 1
        obs = np.empty((n, T + 1, 3))
        obs[:, :, 1:] = cov
        obs[:, 0, 0] = y0
        sigma = np.exp(theta[:, 4])
        eps = rng.standard_normal((n, T))
        for t in range(T):
            obs[:, t + 1, 0] = (theta[:, 0] + theta[:, 1] * obs[:, t, 0]
                                + theta[:, 2] * cov[:, t, 0] + theta[:, 3] * cov[:, t, 1]
                                + sigma * eps[:, t])
        return obs

    def simulate(self, n: int, rng: np.random.Generator):
        """Return ``(theta, x)`` with shapes ``(n, 5)`` and ``(n, T+1, 3)``."""
        if n < 1:
            raise ConfigError("simulation count must be >= 1")
        theta = self.sample_prior(n, rng)
        cov = self.covariates.draw(n, self.T + 1, rng)
        y0 = self.y0_sd * rng.standard_normal(n)
        return theta, self.simulate_given(theta, cov, y0, rng)

    def log_likelihood(self, theta, x) -> np.ndarray:
        """One observation ``(T+1, 3)`` with ``theta (..., 5)``, or a batch
        ``(B, T+1, 3)`` with ``theta (B, L, 5)``."""
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            y, u, w = x[:, 0], x[:, 1], x[:, 2]
            th = theta[..., None, :]
        else:
            y, u, w = x[:, None, :, 0], x[:, None, :, 1], x[:, None, :, 2]
            th = theta[..., None, :]
        T = x.shape[-2] - 1
        mean = (th[..., 0] + th[..., 1] * y[..., :T] + th[..., 2] * u[..., :T]
                + th[..., 3] * w[..., :T])
        r = y[..., 1:] - mean
        log_sigma = theta[..., 4]
        return (-0.5 * T * LOG_2PI - T * log_sigma
                - 0.5 * np.sum(r * r, axis=-1) * np.exp(-2.0 * log_sigma))


SYNTHETIC_COVARIATES = CovariateProcess(level_sd=1.5, slope_sd=1.0, noise_sd=0.15)


def synthetic_countries(n: int, model: AR1Model, rng: np.random.Generator,
                        covariates: CovariateProcess = SYNTHETIC_COVARIATES):
    """Stand-in for the real panel: parameters from the prior, smooth trending
    covariates unlike the simulator's iid ones.  Returns ``(theta, obs)``."""
    theta = model.sample_prior(n, rng)
    cov = covariates.draw(n, model.T + 1, rng)
    y0 = model.y0_sd * rng.standard_normal(n)
    return theta, model.simulate_given(theta, cov, y0, rng)
