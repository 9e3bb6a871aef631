# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: AR(1) log-likelihood, random-walk Metropolis chains
for the two built-in targets, and Gaussian-kernel means for MMD."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, M_PI

cnp.import_array()

cdef double LOG_2PI = log(2.0 * M_PI)


cdef inline double _ar1_ll(const double[::1] th, const double[::1] y,
                           const double[::1] u, const double[::1] w) noexcept nogil:
    cdef Py_ssize_t t, T = y.shape[0] - 1
    cdef double sigma = exp(th[4])
    cdef double inv_var = 1.0 / (sigma * sigma)
    cdef double mean, r, acc = 0.0
    for t in range(T):
        mean = th[0] + th[1] * y[t] + th[2] * u[t] + th[3] * w[t]
        r = y[t + 1] - mean
        acc += r * r
    return -0.5 * T * LOG_2PI - T * th[4] - 0.5 * acc * inv_var


def ar1_loglik(const double[:, ::1] theta, const double[::1] y,
               const double[::1] u, const double[::1] w):
    cdef Py_ssize_t n = theta.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = _ar1_ll(theta[i], y, u, w)
    return out


cdef inline double _normal_prior(const double[::1] th, const double[::1] mean,
                                 const double[::1] sd) noexcept nogil:
    cdef Py_ssize_t d
    cdef double z, acc = 0.0
    for d in range(th.shape[0]):
        z = (th[d] - mean[d]) / sd[d]
        acc += -0.5 * z * z - log(sd[d]) - 0.5 * LOG_2PI
    return acc


def mh_chain_ar1(const double[::1] x0, const double[::1] scales,
                 const double[:, ::1] noise, const double[::1] log_unif,
                 const double[::1] y, const double[::1] u, const double[::1] w,
                 const double[::1] prior_mean, const double[::1] prior_sd):
    cdef Py_ssize_t S = noise.shape[0], D = x0.shape[0], s, d
    chain = np.empty((S, D))
    cdef double[:, ::1] ch = chain
    cdef double[::1] cur = np.array(x0, dtype=np.float64)
    cdef double[::1] prop = np.empty(D)
    cdef double lp_cur = _ar1_ll(cur, y, u, w) + _normal_prior(cur, prior_mean, prior_sd)
    cdef double lp_prop
    cdef long n_acc = 0
    with nogil:
        for s in range(S):
            for d in range(D):
                prop[d] = cur[d] + scales[d] * noise[s, d]
            lp_prop = _ar1_ll(prop, y, u, w) + _normal_prior(prop, prior_mean, prior_sd)
            if log_unif[s] < lp_prop - lp_cur:
                for d in range(D):
                    cur[d] = prop[d]
                lp_cur = lp_prop
                n_acc += 1
            for d in range(D):
                ch[s, d] = cur[d]
    return chain, n_acc


cdef inline double _gauss_lp(const double[::1] th, const double[::1] s1,
                             const double[::1] s2, double K, double var_lik,
                             const double[::1] mu_prior, double var_prior) noexcept nogil:
    cdef Py_ssize_t d, D = th.shape[0]
    cdef double acc = 0.0, z
    for d in range(D):
        acc += -0.5 * (s2[d] - 2.0 * th[d] * s1[d] + K * th[d] * th[d]) / var_lik
        z = th[d] - mu_prior[d]
        acc += -0.5 * z * z / var_prior
    return acc - 0.5 * K * D * log(2.0 * M_PI * var_lik) - 0.5 * D * log(2.0 * M_PI * var_prior)


def mh_chain_gaussian(const double[::1] x0, const double[::1] scales,
                      const double[:, ::1] noise, const double[::1] log_unif,
                      const double[::1] s1, const double[::1] s2, double K, double var_lik,
                      const double[::1] mu_prior, double var_prior):
    cdef Py_ssize_t S = noise.shape[0], D = x0.shape[0], s, d
    chain = np.empty((S, D))
    cdef double[:, ::1] ch = chain
    cdef double[::1] cur = np.array(x0, dtype=np.float64)
    cdef double[::1] prop = np.empty(D)
    cdef double lp_cur = _gauss_lp(cur, s1, s2, K, var_lik, mu_prior, var_prior)
    cdef double lp_prop
    cdef long n_acc = 0
    with nogil:
        for s in range(S):
            for d in range(D):
                prop[d] = cur[d] + scales[d] * noise[s, d]
            lp_prop = _gauss_lp(prop, s1, s2, K, var_lik, mu_prior, var_prior)
            if log_unif[s] < lp_prop - lp_cur:
                for d in range(D):
                    cur[d] = prop[d]
                lp_cur = lp_prop
                n_acc += 1
            for d in range(D):
                ch[s, d] = cur[d]
    return chain, n_acc


def gaussian_kernel_mean(const double[:, ::1] A, const double[:, ::1] B, double h):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], dim = A.shape[1], i, j, d
    cdef double scale = -0.5 / (h * h), acc = 0.0, row, diff, sq
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(m):
                sq = 0.0
                for d in range(dim):
                    diff = A[i, d] - B[j, d]
                    sq += diff * diff
                row += exp(scale * sq)
            acc += row
    return acc / (n * m)
