"""Random-walk Metropolis reference sampler.

Per-coordinate Gaussian proposals.  A pilot phase adapts the proposal scales
(covariance-free: one scale per coordinate from pilot standard deviations, times
a global multiplier tuned toward the acceptance band); the scales are frozen
before burn-in and sampling.  All randomness is pre-drawn from the supplied
generator so the compiled and Python chains consume identical streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import _kernels
from ..errors import ConfigError, DiagnosticError
from .ar1 import AR1Model
from .gaussian import GaussianModel
from .oracle import OracleResult


@dataclass
class MHConfig:
    n_samples: int = 4000
    burn_in: int = 5000
    thin: int = 20
    adapt_rounds: int = 12
    adapt_steps: int = 500
    target_low: float = 0.2
    target_high: float = 0.5
    fail_low: float = 0.05
    fail_high: float = 0.8


def _run(target, x0, scales, n_steps, rng):
    D = len(x0)
    noise = rng.standard_normal((n_steps, D))
    log_unif = np.log(rng.random(n_steps))
    return target(x0, scales, noise, log_unif)


def _make_target(model, observation, log_density: Callable | None, impl=None):
    if log_density is not None:
        def run(x0, scales, noise, log_unif):
            return _kernels.python._chain(log_density, x0, scales, noise, log_unif)
        return run, None
    if isinstance(model, AR1Model):
        obs = np.asarray(observation, dtype=np.float64)
        y, u, w = obs[:, 0], obs[:, 1], obs[:, 2]

        def run(x0, scales, noise, log_unif):
            return _kernels.mh_chain_ar1(x0, scales, noise, log_unif, y, u, w,
                                         model.prior_mean, model.prior_sd, impl=impl)
        return run, model.prior_sd.copy()
    if isinstance(model, GaussianModel):
        x = np.asarray(observation, dtype=np.float64).reshape(-1, model.D)
        s1, s2 = x.sum(axis=0), (x * x).sum(axis=0)

        def run(x0, scales, noise, log_unif):
            return _kernels.mh_chain_gaussian(x0, scales, noise, log_unif, s1, s2,
                                              x.shape[0], model.var_lik, model.mu_prior,
                                              model.var_prior, impl=impl)
        return run, np.full(model.D, np.sqrt(model.var_prior))
    raise ConfigError(f"no built-in MH target for {type(model).__name__}; pass log_density")


def effective_sample_size(chain: np.ndarray) -> np.ndarray:
    """Per-dimension ESS with Geyer's initial positive sequence."""
    chain = np.atleast_2d(np.asarray(chain, dtype=np.float64))
    if chain.shape[0] == 1:
        chain = chain.T
    n = chain.shape[0]
    out = np.empty(chain.shape[1])
    for d in range(chain.shape[1]):
        x = chain[:, d] - chain[:, d].mean()
        var = np.dot(x, x) / n
        if var == 0:
            out[d] = float(n)
            continue
        f = np.fft.rfft(x, 2 * n)
        acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
        tau = -1.0
        for k in range(0, n - 1, 2):
            pair = acf[k] + acf[k + 1]
            if pair <= 0:
                break
            tau += 2.0 * pair
        out[d] = n / max(tau, 1e-12)
    return out


def mh_reference_posterior(model, observation, n_samples: int | None = None,
                           config: MHConfig | None = None,
                           rng: np.random.Generator | None = None,
                           log_density: Callable | None = None,
                           x0=None, init_scales=None, impl=None) -> OracleResult:
    """Random-walk Metropolis samples of ``p(theta | observation)``.

    Raises ``DiagnosticError`` when the frozen sampler's acceptance rate falls
    outside ``[fail_low, fail_high]``.
    """
    cfg = config or MHConfig()
    if n_samples is not None:
        cfg = MHConfig(**{**cfg.__dict__, "n_samples": n_samples})
    rng = rng if rng is not None else np.random.default_rng(0)
    target, scale0 = _make_target(model, observation, log_density, impl)
    if x0 is None:
        if hasattr(model, "prior_mean"):
            x0 = np.asarray(model.prior_mean, dtype=np.float64)
        else:
            x0 = np.asarray(model.mu_prior, dtype=np.float64)
    x0 = np.array(x0, dtype=np.float64)
    D = len(x0)
    base = np.asarray(init_scales if init_scales is not None else
                      (scale0 if scale0 is not None else np.ones(D)), dtype=np.float64)
    base = base * 2.38 / np.sqrt(D)
    mult = 1.0
    acc = 0.0
    for r in range(cfg.adapt_rounds):
        chain, n_acc = _run(target, x0, base * mult, cfg.adapt_steps, rng)
        acc = n_acc / cfg.adapt_steps
        x0 = chain[-1].copy()
        sd = chain[cfg.adapt_steps // 2:].std(axis=0)
        if r in (2, 5) and acc > 0.02 and np.all(sd > 0):
            # re-centre per-coordinate scales on the pilot spread
            base = sd * 2.38 / np.sqrt(D)
            mult = 1.0
            continue
        if cfg.target_low <= acc <= cfg.target_high and r >= 6:
            break
        mult *= np.exp(2.0 * (acc - 0.3))
    scales = base * mult
    chain, _ = _run(target, x0, scales, cfg.burn_in, rng)
    x0 = chain[-1].copy() if cfg.burn_in else x0
    chain, n_acc = _run(target, x0, scales, cfg.n_samples * cfg.thin, rng)
    acceptance = n_acc / (cfg.n_samples * cfg.thin)
    if not cfg.fail_low <= acceptance <= cfg.fail_high:
        raise DiagnosticError(f"MH acceptance rate {acceptance:.3f} outside "
                              f"[{cfg.fail_low}, {cfg.fail_high}] after adaptation")
    samples = chain[cfg.thin - 1::cfg.thin]
    ess = effective_sample_size(samples)
    return OracleResult(
        kind="mcmc",
        mean=samples.mean(axis=0),
        sd=samples.std(axis=0, ddof=1),
        samples=samples,
        diagnostics={"acceptance_rate": acceptance, "ess": ess.tolist(),
                     "scales": scales.tolist(), "backend": _kernels.BACKEND},
    )
