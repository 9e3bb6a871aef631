"""Pure-numpy versions of the compiled kernels (same signatures and results)."""
from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def ar1_loglik(theta, y, u, w):
    theta = np.atleast_2d(theta)
    T = y.shape[0] - 1
    mean = (theta[:, 0:1] + theta[:, 1:2] * y[None, :T]
            + theta[:, 2:3] * u[None, :T] + theta[:, 3:4] * w[None, :T])
    r = y[None, 1:] - mean
    sigma = np.exp(theta[:, 4])
    return (-0.5 * T * LOG_2PI - T * theta[:, 4]
            - 0.5 * np.sum(r * r, axis=1) / (sigma * sigma))


def _normal_prior(th, mean, sd):
    z = (th - mean) / sd
    return float(np.sum(-0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI))


def _chain(logpost, x0, scales, noise, log_unif):
    S, D = noise.shape
    chain = np.empty((S, D))
    cur = np.array(x0, dtype=np.float64)
    lp_cur = logpost(cur)
    n_acc = 0
    for s in range(S):
        prop = cur + scales * noise[s]
        lp_prop = logpost(prop)
        if log_unif[s] < lp_prop - lp_cur:
            cur, lp_cur = prop, lp_prop
            n_acc += 1
        chain[s] = cur
    return chain, n_acc


def mh_chain_ar1(x0, scales, noise, log_unif, y, u, w, prior_mean, prior_sd):
    def logpost(th):
        return float(ar1_loglik(th[None, :], y, u, w)[0]) + _normal_prior(th, prior_mean, prior_sd)
    return _chain(logpost, x0, scales, noise, log_unif)


def mh_chain_gaussian(x0, scales, noise, log_unif, s1, s2, K, var_lik, mu_prior, var_prior):
    D = x0.shape[0]
    const = -0.5 * K * D * np.log(2.0 * np.pi * var_lik) - 0.5 * D * np.log(2.0 * np.pi * var_prior)

    def logpost(th):
        ll = -0.5 * np.sum(s2 - 2.0 * th * s1 + K * th * th) / var_lik
        lp = -0.5 * np.sum((th - mu_prior) ** 2) / var_prior
        return float(ll + lp + const)
    return _chain(logpost, x0, scales, noise, log_unif)


def gaussian_kernel_mean(A, B, h, block: int = 1024):
    scale = -0.5 / (h * h)
    total = 0.0
    b2 = np.sum(B * B, axis=1)
    for start in range(0, A.shape[0], block):
        a = A[start:start + block]
        sq = np.sum(a * a, axis=1)[:, None] + b2[None, :] - 2.0 * a @ B.T
        np.maximum(sq, 0.0, out=sq)
        total += float(np.exp(scale * sq).sum())
    return total / (A.shape[0] * B.shape[0])
