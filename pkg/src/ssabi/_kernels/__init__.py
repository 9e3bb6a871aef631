"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set ``SSABI_PURE_PYTHON=1`` to
force the fallback.  ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels as python

try:
    if os.environ.get("SSABI_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure Python backend forced by SSABI_PURE_PYTHON")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"


def _resolve(impl):
    """``None`` (active backend), ``"compiled"``, ``"python"``, or a kernel module."""
    if impl is None:
        return _impl
    if impl == "python":
        return python
    if impl == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not available")
        return compiled
    return impl


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def ar1_loglik(theta, y, u, w, impl=None) -> np.ndarray:
    """Log-likelihood of transitions ``y[1:]`` given ``y[0]`` for each row of ``theta``.

    ``theta`` columns are ``(alpha, beta, gamma, delta, log_sigma)``.
    """
    return _resolve(impl).ar1_loglik(_c(np.atleast_2d(theta)), _c(y), _c(u), _c(w))


def mh_chain_ar1(x0, scales, noise, log_unif, y, u, w, prior_mean, prior_sd, impl=None):
    return _resolve(impl).mh_chain_ar1(_c(x0), _c(scales), _c(noise), _c(log_unif),
                                        _c(y), _c(u), _c(w), _c(prior_mean), _c(prior_sd))


def mh_chain_gaussian(x0, scales, noise, log_unif, s1, s2, K, var_lik, mu_prior,
                      var_prior, impl=None):
    return _resolve(impl).mh_chain_gaussian(_c(x0), _c(scales), _c(noise), _c(log_unif),
                                             _c(s1), _c(s2), float(K), float(var_lik),
                                             _c(mu_prior), float(var_prior))


def gaussian_kernel_mean(A, B, h: float, impl=None) -> float:
    """Mean of ``exp(-|a-b|^2 / (2 h^2))`` over all pairs ``(a, b)``.

    Defaults to the numpy version: its vectorized exp outruns the scalar
    compiled loop (see benchmarks/bench_kernels.py).
    """
    mod = python if impl is None else _resolve(impl)
    return float(mod.gaussian_kernel_mean(_c(A), _c(B), float(h)))
