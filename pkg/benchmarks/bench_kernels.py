"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Checks that both backends agree before timing them.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ssabi import _kernels
from ssabi.model_zoo import AR1Model, synthetic_countries


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng: np.random.Generator):
    model = AR1Model()
    _, obs = synthetic_countries(1, model, rng)
    y, u, w = obs[0, :, 0], obs[0, :, 1], obs[0, :, 2]
    n_steps = 50_000
    noise = rng.standard_normal((n_steps, 5))
    log_unif = np.log(rng.random(n_steps))
    x0 = model.prior_mean.copy()
    scales = 0.1 * model.prior_sd

    def mh_ar1(impl):
        return _kernels.mh_chain_ar1(x0, scales, noise, log_unif, y, u, w, model.prior_mean,
                                     model.prior_sd, impl=impl)

    D = 10
    gnoise = rng.standard_normal((n_steps, D))
    s1 = rng.standard_normal(D)

    def mh_gauss(impl):
        return _kernels.mh_chain_gaussian(np.zeros(D), np.full(D, 0.3), gnoise, log_unif, s1,
                                          s1 * s1, 1, 1.0, np.zeros(D), 1.0, impl=impl)

    A = rng.standard_normal((2000, 10))
    B = rng.standard_normal((2000, 10)) + 0.5

    def kernel_mean(impl):
        return _kernels.gaussian_kernel_mean(A, B, 1.3, impl=impl)

    theta = rng.standard_normal((20_000, 5)) * 0.3

    def loglik(impl):
        return _kernels.ar1_loglik(theta, y, u, w, impl=impl)

    return {"mh_chain_ar1 (50k steps)": mh_ar1, "mh_chain_gaussian D=10 (50k steps)": mh_gauss,
            "gaussian_kernel_mean 2000x2000": kernel_mean, "ar1_loglik 20k params": loglik}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled kernels unavailable; only the Python fallback is importable")
        return 1
    print(f"{'kernel':<38} {'compiled s':>11} {'python s':>10} {'speedup':>8}  agree")
    for name, fn in cases(np.random.default_rng(0)).items():
        a, b = fn("compiled"), fn("python")
        if isinstance(a, tuple):
            agree = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b))
        else:
            agree = bool(np.allclose(a, b, rtol=1e-12, atol=1e-12))
        tc = _best(lambda: fn("compiled"), args.repeat)
        tp = _best(lambda: fn("python"), args.repeat)
        print(f"{name:<38} {tc:>11.4f} {tp:>10.4f} {tp / tc:>7.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
