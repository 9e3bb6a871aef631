"""Simulation-based NLL, variance self-consistency loss, and their weighted sum.

The ``*_loss`` functions evaluate values for any object with the
conditional-density interface (``log_prob``/``sample``).  The ``*_term``
functions work on an :class:`~ssabi.approximator.Approximator`, take a tape,
and return ``(value, backward)`` so the training loop can accumulate gradients.

Proposal draws for the self-consistency term are constants of the iteration:
gradients reach the networks only through ``log q``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .diffmath import Tape, l2_penalty, l2_penalty_grad
from .errors import ConfigError, NumericalError

PROPOSALS = ("current_posterior", "prior")


@dataclass
class LossBreakdown:
    nll: float
    sc: float
    l2: float
    total: float
    lambda_used: float
    nll_posterior: float = 0.0
    nll_likelihood: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def empirical_variance(r: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unbiased variance along ``axis``; exactly zero for constant rows."""
    r = np.asarray(r, dtype=np.float64)
    var = np.var(r, axis=axis, ddof=1)
    return np.where(np.ptp(r, axis=axis) == 0, 0.0, var)


def _check_L(L: int) -> None:
    if L < 2:
        raise ConfigError(f"self-consistency loss needs L >= 2, got {L}")


def _check_finite(r: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(r)):
        bad = np.argwhere(~np.isfinite(r))[0].tolist()
        raise NumericalError(f"non-finite {what} at index {bad}")


def _draw_proposal(posterior, x_star, L, proposal, rng, prior_sampler):
    if isinstance(proposal, np.ndarray):
        return proposal
    if proposal == "current_posterior":
        return posterior.sample(L, x_star, rng)
    if proposal == "prior":
        if prior_sampler is None:
            raise ConfigError("proposal='prior' needs prior_sampler")
        return prior_sampler(L, rng)
    raise ConfigError(f"unknown proposal {proposal!r}; expected one of {PROPOSALS}")


def nll_loss(posterior, theta, x) -> float:
    """``-(1/N) sum_n log q(theta_n | x_n)``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    if len(theta) == 0:
        raise ConfigError("empty batch")
    lp = np.array([posterior.log_prob(theta[i:i + 1], x[i])[0] for i in range(len(theta))])
    _check_finite(lp, "log-density in nll_loss")
    return float(-lp.mean())


def sc_variance_loss(posterior, log_lik: Callable, log_prior: Callable, x_star, L: int,
                     proposal="current_posterior", rng: np.random.Generator | None = None,
                     prior_sampler: Callable | None = None) -> float:
    """Empirical variance over ``L`` proposal draws of
    ``log p(x*|theta) + log p(theta) - log q(theta|x*)``.

    ``log_lik(theta, x_star)`` and ``log_prior(theta)`` return one value per row.
    """
    _check_L(L)
    theta = _draw_proposal(posterior, x_star, L, proposal, rng, prior_sampler)
    # prior and q are cancelled first so that q == prior gives an exact zero there
    r = log_lik(theta, x_star) + (log_prior(theta) - posterior.log_prob(theta, x_star))
    _check_finite(r, "self-consistency log-ratio")
    return float(empirical_variance(r))


def sc_variance_loss_nple(posterior, likelihood, log_prior: Callable, x_star, L: int,
                          proposal="current_posterior", rng: np.random.Generator | None = None,
                          prior_sampler: Callable | None = None) -> float:
    """As :func:`sc_variance_loss` with ``likelihood.log_prob(x_star, theta)`` as
    the likelihood term."""
    return sc_variance_loss(posterior, lambda th, x: likelihood.log_prob(x, th), log_prior,
                            x_star, L, proposal, rng, prior_sampler)


def nll_term(approx, theta, x, tape: Tape | None):
    theta = np.asarray(theta, dtype=np.float64)
    if len(theta) == 0:
        raise ConfigError("empty labeled batch")
    c, ccache = approx.condition(x, tape)
    lp, cache = approx.posterior.log_prob_with_cache(theta, c, tape)
    _check_finite(lp, "posterior log-density")
    n = len(lp)

    def backward(seed: float) -> None:
        _, g_c = approx.posterior.log_prob_backward(cache, np.full(n, -seed / n), tape)
        approx.condition_backward(ccache, g_c, tape)
    return float(-lp.mean()), backward


def _likelihood_rows(x, theta):
    """Flatten observations ``(B, K, P)`` and parameters ``(B, D)`` to per-point rows."""
    B, K = x.shape[0], x.shape[1]
    return x.reshape(B * K, -1), np.repeat(theta, K, axis=0), K


def likelihood_nll_term(approx, theta, x, tape: Tape | None):
    """``-(1/N) sum_n sum_k log q(x_n^(k) | theta_n)``."""
    rows, cond, K = _likelihood_rows(np.asarray(x, dtype=np.float64), np.asarray(theta))
    lp, cache = approx.likelihood.log_prob_with_cache(rows, cond, tape)
    _check_finite(lp, "likelihood log-density")
    n = len(theta)

    def backward(seed: float) -> None:
        approx.likelihood.log_prob_backward(cache, np.full(len(lp), -seed / n), tape)
    return float(-lp.sum() / n), backward


def sc_term(approx, model, x_star, L: int, proposal, rng, tape: Tape | None,
            likelihood_mode: str = "known"):
    """Mean over the unlabeled batch of the per-observation SC variance."""
    _check_L(L)
    x_star = np.asarray(x_star, dtype=np.float64)
    B = len(x_star)
    D = approx.arch.param_dim
    if isinstance(proposal, np.ndarray):
        theta = proposal
    elif proposal == "current_posterior":
        theta = approx.sample_batch(L, x_star, rng)
    elif proposal == "prior":
        theta = model.sample_prior(B * L, rng).reshape(B, L, D)
    else:
        raise ConfigError(f"unknown proposal {proposal!r}")
    c, ccache = approx.condition(x_star, tape)
    flat = theta.reshape(B * L, D)
    lq, qcache = approx.posterior.log_prob_with_cache(flat, np.repeat(c, L, axis=0), tape)
    lq = lq.reshape(B, L)
    lcache = None
    if likelihood_mode == "known":
        ll = model.log_likelihood(theta, x_star)
    elif likelihood_mode == "estimated":
        rows, cond, K = _likelihood_rows(np.repeat(x_star, L, axis=0), flat)
        llr, lcache = approx.likelihood.log_prob_with_cache(rows, cond, tape)
        ll = llr.reshape(B, L, K).sum(axis=2)
    else:
        raise ConfigError(f"unknown likelihood_mode {likelihood_mode!r}")
    r = ll + (model.log_prior(theta) - lq)
    _check_finite(r, "self-consistency log-ratio")
    value = float(empirical_variance(r, axis=1).mean())

    def backward(seed: float) -> None:
        g_r = seed * (2.0 / (L - 1)) * (r - r.mean(axis=1, keepdims=True)) / B
        _, g_c = approx.posterior.log_prob_backward(qcache, -g_r.ravel(), tape)
        approx.condition_backward(ccache, g_c.reshape(B, L, -1).sum(axis=1), tape)
        if lcache is not None:
            approx.likelihood.log_prob_backward(lcache, np.repeat(g_r.ravel(), K), tape)
    return value, backward


def semi_supervised_loss(approx, model, labeled_batch, unlabeled_batch, lam: float, L: int,
                         gamma_l2: float, rng: np.random.Generator | None,
                         tape: Tape | None = None, proposal="current_posterior",
                         likelihood_mode: str = "known") -> LossBreakdown:
    """``nll + lam * sc + l2``; with a tape, gradients are accumulated into it.

    With ``lam == 0`` or no unlabeled data the self-consistency term is skipped
    entirely (neither the unlabeled data nor the likelihood is touched).
    """
    theta, x = labeled_batch
    nll_post, bw_post = nll_term(approx, theta, x, tape)
    nll_lik, bw_lik = 0.0, None
    if likelihood_mode == "estimated":
        if approx.likelihood is None:
            raise ConfigError("likelihood_mode='estimated' needs a likelihood network")
        nll_lik, bw_lik = likelihood_nll_term(approx, theta, x, tape)
    sc, bw_sc = 0.0, None
    if lam != 0 and unlabeled_batch is not None and len(unlabeled_batch):
        sc, bw_sc = sc_term(approx, model, unlabeled_batch, L, proposal, rng, tape,
                            likelihood_mode)
    l2 = l2_penalty(approx.params, gamma_l2)
    nll = nll_post + nll_lik
    total = nll + lam * sc + l2
    if tape is not None:
        bw_post(1.0)
        if bw_lik is not None:
            bw_lik(1.0)
        if bw_sc is not None:
            bw_sc(lam)
        l2_penalty_grad(approx.params, gamma_l2, tape)
    return LossBreakdown(nll=nll, sc=sc, l2=l2, total=total, lambda_used=lam,
                         nll_posterior=nll_post, nll_likelihood=nll_lik)
